#include "onh/sim.hpp"

#include <sstream>

#include "onh/evaluate.hpp"
#include "onh/rng.hpp"
#include "onh/text.hpp"

namespace onh {

const std::array<ClusterStat, kNumEyeClasses>& cohort_stats() {
    static const std::array<ClusterStat, kNumEyeClasses> stats = {{
        {70, 0.66, 0.55, 1.98, 0.63},   // odd
        {30, 0.004, 0.015, 3.43, 1.49}, // papilledema
        {50, 0.002, 0.005, 1.23, 0.26}, // healthy
    }};
    return stats;
}

namespace {

std::string padded_id(char prefix, std::size_t n) {
    std::ostringstream os;
    os << prefix;
    std::string digits = std::to_string(n);
    for (std::size_t i = digits.size(); i < 4; ++i)
        os << '0';
    os << digits;
    return os.str();
}

} // namespace

std::vector<EyeFeatures> simulate_cohort(std::uint64_t seed, bool collapsed) {
    const auto& stats = cohort_stats();
    std::vector<EyeFeatures> cohort;
    std::size_t eye_no = 1, subject_no = 1;
    for (int c = 0; c < kNumEyeClasses; ++c) {
        const auto& cls = stats[static_cast<std::size_t>(c)];
        const auto& draw = collapsed ? stats[static_cast<std::size_t>(EyeClass::Healthy)] : cls;
        Rng rng(derive_seed(seed, "cohort", static_cast<std::uint64_t>(c)));
        std::size_t made = 0;
        while (made < cls.count) {
            const bool fellow_eye = rng.next_double() < 0.15 && made + 2 <= cls.count;
            const std::string subject = padded_id('S', subject_no++);
            const int eyes = fellow_eye ? 2 : 1;
            for (int e = 0; e < eyes; ++e, ++made) {
                EyeFeatures f;
                f.eye_id = padded_id('E', eye_no++);
                f.subject_id = subject;
                f.true_class = static_cast<EyeClass>(c);
                f.drusen_mm3 = rng.truncated_normal_nonneg(draw.drusen_mean, draw.drusen_sd);
                f.swelling_mm3 =
                    rng.truncated_normal_nonneg(draw.swelling_mean, draw.swelling_sd);
                cohort.push_back(std::move(f));
            }
        }
    }
    return cohort;
}

namespace {

void append_real(std::ostringstream& os, const char* key, double v, bool last = false) {
    os << "    \"" << key << "\": " << format_g6(v) << (last ? "\n" : ",\n");
}

} // namespace

ReproResult run_repro(std::uint64_t seed, bool collapsed, const ForestParams& params,
                      int n_threads, const ReproThresholds& thresholds) {
    const auto cohort = simulate_cohort(seed, collapsed);
    const HoldoutReport holdout =
        holdout_eval(cohort, 0.5, params, derive_seed(seed, "holdout-split"), n_threads);
    const CvReport cv = cross_validate(cohort, 5, params, derive_seed(seed, "cv"), n_threads);

    ReproResult res;
    res.pass = cv.auc_odd.mean >= thresholds.min_mean_auc &&
               cv.auc_papilledema.mean >= thresholds.min_mean_auc &&
               cv.auc_healthy.mean >= thresholds.min_mean_auc &&
               cv.accuracy.mean >= thresholds.min_mean_accuracy;

    std::array<std::size_t, kNumEyeClasses> counts{};
    for (const auto& f : cohort)
        ++counts[static_cast<std::size_t>(*f.true_class)];

    std::ostringstream os;
    os << "{\n  \"kind\": \"repro\",\n  \"seed\": " << seed
       << ",\n  \"collapsed_classes\": " << (collapsed ? "true" : "false")
       << ",\n  \"cohort\": {\"odd\": " << counts[0] << ", \"papilledema\": " << counts[1]
       << ", \"healthy\": " << counts[2] << "},\n";
    os << "  \"holdout\": {\n";
    append_real(os, "train_fraction", holdout.train_fraction);
    os << "    \"n_train\": " << holdout.n_train << ",\n    \"n_test\": " << holdout.n_test
       << ",\n";
    append_real(os, "auc_odd", holdout.auc_odd);
    append_real(os, "auc_papilledema", holdout.auc_papilledema);
    append_real(os, "auc_healthy", holdout.auc_healthy);
    append_real(os, "accuracy", holdout.accuracy, true);
    os << "  },\n";

    // splice the cv object in as a nested, re-indented section
    std::string cv_block = cv_report_json(cv, derive_seed(seed, "cv"), cohort.size());
    if (!cv_block.empty() && cv_block.back() == '\n')
        cv_block.pop_back();
    os << "  \"cv\": ";
    for (char ch : cv_block) {
        os << ch;
        if (ch == '\n')
            os << "  ";
    }
    os << ",\n  \"thresholds\": {\n";
    append_real(os, "min_mean_auc", thresholds.min_mean_auc);
    append_real(os, "min_mean_accuracy", thresholds.min_mean_accuracy, true);
    os << "  },\n  \"pass\": " << (res.pass ? "true" : "false") << "\n}\n";
    res.report_json = os.str();
    return res;
}

} // namespace onh
