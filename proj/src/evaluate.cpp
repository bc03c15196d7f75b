#include "onh/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "onh/common.hpp"
#include "onh/rng.hpp"
#include "onh/text.hpp"

namespace onh {

namespace {

struct OverlapCounts {
    std::uint64_t inter = 0;
    std::uint64_t pred = 0;
    std::uint64_t truth = 0;
};

OverlapCounts overlap(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth,
                      int tissue_class) {
    if (pred.size() != truth.size())
        throw Error("overlap metrics: shape mismatch");
    if (tissue_class < 0 || tissue_class >= kNumTissueClasses)
        throw Error("overlap metrics: tissue class out of range");
    const auto c = static_cast<std::uint8_t>(tissue_class);
    OverlapCounts n;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool a = pred[i] == c;
        const bool b = truth[i] == c;
        n.pred += a;
        n.truth += b;
        n.inter += a && b;
    }
    return n;
}

std::optional<double> dice_from(const OverlapCounts& n) {
    if (n.pred + n.truth == 0)
        return std::nullopt;
    return 2.0 * static_cast<double>(n.inter) / static_cast<double>(n.pred + n.truth);
}

std::optional<double> jaccard_from(const OverlapCounts& n) {
    const std::uint64_t uni = n.pred + n.truth - n.inter;
    if (uni == 0)
        return std::nullopt;
    return static_cast<double>(n.inter) / static_cast<double>(uni);
}

void check_same_grid(const LabelVolume& a, const LabelVolume& b) {
    if (a.dims.nb != b.dims.nb || a.dims.na != b.dims.na || a.dims.nd != b.dims.nd)
        throw Error("overlap metrics: volume dimensions differ");
}

} // namespace

std::optional<double> dice(std::span<const std::uint8_t> pred,
                           std::span<const std::uint8_t> truth, int tissue_class) {
    return dice_from(overlap(pred, truth, tissue_class));
}

std::optional<double> jaccard(std::span<const std::uint8_t> pred,
                              std::span<const std::uint8_t> truth, int tissue_class) {
    return jaccard_from(overlap(pred, truth, tissue_class));
}

std::optional<double> dice(const LabelVolume& pred, const LabelVolume& truth, int tissue_class) {
    check_same_grid(pred, truth);
    return dice(std::span<const std::uint8_t>(pred.data),
                std::span<const std::uint8_t>(truth.data), tissue_class);
}

std::optional<double> jaccard(const LabelVolume& pred, const LabelVolume& truth,
                              int tissue_class) {
    check_same_grid(pred, truth);
    return jaccard(std::span<const std::uint8_t>(pred.data),
                   std::span<const std::uint8_t>(truth.data), tissue_class);
}

DiceReport dice_report(const LabelVolume& pred, const LabelVolume& truth) {
    check_same_grid(pred, truth);
    std::array<OverlapCounts, kNumTissueClasses> counts;
    for (std::size_t i = 0; i < truth.data.size(); ++i) {
        ++counts[pred.data[i]].pred;
        ++counts[truth.data[i]].truth;
        if (pred.data[i] == truth.data[i])
            ++counts[pred.data[i]].inter;
    }
    DiceReport rep;
    double sum = 0.0;
    int defined = 0;
    for (int c = 1; c < kNumTissueClasses; ++c) {
        rep.per_class[static_cast<std::size_t>(c)] = dice_from(counts[static_cast<std::size_t>(c)]);
        if (counts[static_cast<std::size_t>(c)].truth > 0) {
            sum += *rep.per_class[static_cast<std::size_t>(c)];
            ++defined;
        } else {
            rep.excluded.push_back(c);
        }
    }
    if (defined > 0)
        rep.mean = sum / defined;
    return rep;
}

double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positives) {
    if (scores.size() != positives.size())
        throw Error("roc_auc: scores and labels differ in length");
    std::uint64_t n_pos = 0;
    for (bool p : positives)
        n_pos += p;
    const std::uint64_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw Error("roc_auc: need at least one positive and one negative");
    for (double s : scores)
        if (!std::isfinite(s))
            throw Error("roc_auc: non-finite score");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // wins count 2, ties count 1; the single division keeps the result exact
    // enough to match brute-force pair counting bit for bit.
    std::uint64_t two_u = 0;
    std::uint64_t neg_below = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        std::uint64_t tie_pos = 0, tie_neg = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (positives[order[j]])
                ++tie_pos;
            else
                ++tie_neg;
            ++j;
        }
        two_u += tie_pos * (2 * neg_below + tie_neg);
        neg_below += tie_neg;
        i = j;
    }
    return static_cast<double>(two_u) / static_cast<double>(2 * n_pos * n_neg);
}

std::array<double, kNumEyeClasses> one_vs_all_aucs(
    const std::vector<std::array<double, kNumEyeClasses>>& probs,
    const std::vector<EyeClass>& truth) {
    if (probs.size() != truth.size())
        throw Error("one_vs_all_aucs: probabilities and truth differ in length");
    std::array<double, kNumEyeClasses> out{};
    for (int c = 0; c < kNumEyeClasses; ++c) {
        std::vector<double> scores(probs.size());
        std::vector<bool> pos(probs.size());
        std::size_t n_pos = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            scores[i] = probs[i][static_cast<std::size_t>(c)];
            pos[i] = truth[i] == static_cast<EyeClass>(c);
            n_pos += pos[i];
        }
        if (n_pos == 0)
            throw Error("one_vs_all_aucs: class '" +
                        std::string(to_string(static_cast<EyeClass>(c))) +
                        "' absent from truth");
        out[static_cast<std::size_t>(c)] = roc_auc(scores, pos);
    }
    return out;
}

double accuracy(const std::vector<EyeClass>& pred, const std::vector<EyeClass>& truth) {
    if (pred.size() != truth.size())
        throw Error("accuracy: predictions and truth differ in length");
    if (pred.empty())
        throw Error("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        hits += pred[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<std::vector<int>> grouped_split(const std::vector<EyeFeatures>& features,
                                            const std::vector<double>& fractions,
                                            std::uint64_t seed) {
    if (features.empty())
        throw Error("grouped_split: no eyes");
    if (fractions.empty())
        throw Error("grouped_split: no parts requested");
    double frac_sum = 0.0;
    for (double f : fractions) {
        if (!std::isfinite(f) || f <= 0.0)
            throw Error("grouped_split: fractions must be positive");
        frac_sum += f;
    }
    if (std::abs(frac_sum - 1.0) > 1e-9)
        throw Error("grouped_split: fractions must sum to 1");
    const std::size_t n_parts = fractions.size();

    // subject id -> eye indices, deterministically ordered by id
    std::map<std::string, std::vector<int>> by_subject;
    for (std::size_t i = 0; i < features.size(); ++i) {
        validate(features[i]);
        if (!features[i].true_class)
            throw Error("grouped_split: eye '" + features[i].eye_id + "' has no true class");
        by_subject[features[i].subject_id].push_back(static_cast<int>(i));
    }

    std::array<std::vector<const std::vector<int>*>, kNumEyeClasses> subjects_of_class;
    for (const auto& [id, eyes] : by_subject) {
        std::array<int, kNumEyeClasses> count{};
        for (int e : eyes)
            ++count[static_cast<std::size_t>(*features[static_cast<std::size_t>(e)].true_class)];
        int majority = 0;
        for (int c = 1; c < kNumEyeClasses; ++c)
            if (count[static_cast<std::size_t>(c)] > count[static_cast<std::size_t>(majority)])
                majority = c;
        subjects_of_class[static_cast<std::size_t>(majority)].push_back(&eyes);
    }

    std::vector<std::vector<int>> parts(n_parts);
    for (int c = 0; c < kNumEyeClasses; ++c) {
        auto& subjects = subjects_of_class[static_cast<std::size_t>(c)];
        if (subjects.empty())
            continue;
        if (subjects.size() < n_parts)
            throw Error("grouped_split: class '" +
                        std::string(to_string(static_cast<EyeClass>(c))) + "' has " +
                        std::to_string(subjects.size()) + " subjects for " +
                        std::to_string(n_parts) + " parts");

        Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(c)));
        for (std::size_t i = subjects.size() - 1; i > 0; --i) {
            const auto j = rng.bounded(i + 1);
            std::swap(subjects[i], subjects[j]);
        }

        // largest-remainder apportionment of this class's subjects
        const auto n_c = static_cast<double>(subjects.size());
        std::vector<std::size_t> quota(n_parts);
        std::vector<std::pair<double, std::size_t>> rem(n_parts);
        std::size_t assigned = 0;
        for (std::size_t p = 0; p < n_parts; ++p) {
            const double target = fractions[p] * n_c;
            quota[p] = static_cast<std::size_t>(std::floor(target));
            rem[p] = {target - std::floor(target), p};
            assigned += quota[p];
        }
        std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first)
                return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t r = 0; assigned < subjects.size(); ++r, ++assigned)
            ++quota[rem[r % n_parts].second];

        std::size_t next = 0;
        for (std::size_t p = 0; p < n_parts; ++p) {
            for (std::size_t k = 0; k < quota[p]; ++k, ++next)
                for (int e : *subjects[next])
                    parts[p].push_back(e);
        }
    }
    for (auto& p : parts)
        std::sort(p.begin(), p.end());
    return parts;
}

namespace {

MetricSummary summarize(std::vector<double> per_fold) {
    MetricSummary s;
    s.per_fold = std::move(per_fold);
    for (double v : s.per_fold)
        s.mean += v;
    s.mean /= static_cast<double>(s.per_fold.size());
    if (s.per_fold.size() > 1) {
        double sq = 0.0;
        for (double v : s.per_fold)
            sq += (v - s.mean) * (v - s.mean);
        s.std_dev = std::sqrt(sq / static_cast<double>(s.per_fold.size() - 1));
    }
    return s;
}

struct EvalOutcome {
    std::array<double, kNumEyeClasses> aucs{};
    double acc = 0.0;
};

EvalOutcome eval_on(const ForestModel& model, const std::vector<EyeFeatures>& test) {
    std::vector<std::array<double, kNumEyeClasses>> probs;
    std::vector<EyeClass> preds, truth;
    probs.reserve(test.size());
    for (const auto& f : test) {
        const auto x = f.feature_vector();
        probs.push_back(predict_proba(model, x));
        preds.push_back(predict_class(model, x));
        truth.push_back(*f.true_class);
    }
    EvalOutcome out;
    out.aucs = one_vs_all_aucs(probs, truth);
    out.acc = accuracy(preds, truth);
    return out;
}

} // namespace

CvReport cross_validate(const std::vector<EyeFeatures>& features, int k,
                        const ForestParams& params, std::uint64_t seed, int n_threads) {
    if (k < 2)
        throw Error("cross_validate: need at least 2 folds");
    const auto folds =
        grouped_split(features, std::vector<double>(static_cast<std::size_t>(k), 1.0 / k), seed);

    CvReport rep;
    rep.folds = k;
    rep.fold_of_eye.assign(features.size(), -1);
    for (std::size_t i = 0; i < folds.size(); ++i)
        for (int e : folds[i])
            rep.fold_of_eye[static_cast<std::size_t>(e)] = static_cast<int>(i);

    std::vector<double> auc0, auc1, auc2, acc;
    for (std::size_t i = 0; i < folds.size(); ++i) {
        std::vector<char> held(features.size(), 0);
        for (int e : folds[i])
            held[static_cast<std::size_t>(e)] = 1;
        std::vector<EyeFeatures> train, test;
        for (std::size_t e = 0; e < features.size(); ++e)
            (held[e] ? test : train).push_back(features[e]);

        ForestParams fp = params;
        fp.seed = derive_seed(seed, "fold", i);
        const ForestModel model = train_forest(train, fp, n_threads);
        const EvalOutcome out = eval_on(model, test);
        auc0.push_back(out.aucs[0]);
        auc1.push_back(out.aucs[1]);
        auc2.push_back(out.aucs[2]);
        acc.push_back(out.acc);
    }
    rep.auc_odd = summarize(std::move(auc0));
    rep.auc_papilledema = summarize(std::move(auc1));
    rep.auc_healthy = summarize(std::move(auc2));
    rep.accuracy = summarize(std::move(acc));
    return rep;
}

HoldoutReport holdout_eval(const std::vector<EyeFeatures>& features, double train_fraction,
                           const ForestParams& params, std::uint64_t seed, int n_threads) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw Error("holdout_eval: train fraction must be in (0,1)");
    const auto parts = grouped_split(features, {train_fraction, 1.0 - train_fraction}, seed);
    std::vector<EyeFeatures> train, test;
    for (int e : parts[0])
        train.push_back(features[static_cast<std::size_t>(e)]);
    for (int e : parts[1])
        test.push_back(features[static_cast<std::size_t>(e)]);

    ForestParams fp = params;
    fp.seed = derive_seed(seed, "holdout");
    const ForestModel model = train_forest(train, fp, n_threads);
    const EvalOutcome out = eval_on(model, test);

    HoldoutReport rep;
    rep.train_fraction = train_fraction;
    rep.n_train = train.size();
    rep.n_test = test.size();
    rep.auc_odd = out.aucs[0];
    rep.auc_papilledema = out.aucs[1];
    rep.auc_healthy = out.aucs[2];
    rep.accuracy = out.acc;
    return rep;
}

namespace {

void append_summary(std::ostringstream& os, const char* name, const MetricSummary& s,
                    bool last) {
    os << "  \"" << name << "\": {\n    \"per_fold\": [";
    for (std::size_t i = 0; i < s.per_fold.size(); ++i)
        os << (i ? ", " : "") << format_g6(s.per_fold[i]);
    os << "],\n    \"mean\": " << format_g6(s.mean) << ",\n    \"std\": " << format_g6(s.std_dev)
       << "\n  }" << (last ? "\n" : ",\n");
}

} // namespace

std::string dice_report_json(const DiceReport& report) {
    std::ostringstream os;
    os << "{\n  \"kind\": \"dice\",\n  \"per_class\": {\n";
    for (int c = 1; c < kNumTissueClasses; ++c) {
        const auto& v = report.per_class[static_cast<std::size_t>(c)];
        os << "    \"" << c << "\": " << (v ? format_g6(*v) : "null")
           << (c + 1 < kNumTissueClasses ? ",\n" : "\n");
    }
    os << "  },\n  \"mean\": " << (report.mean ? format_g6(*report.mean) : "null")
       << ",\n  \"excluded\": [";
    for (std::size_t i = 0; i < report.excluded.size(); ++i)
        os << (i ? ", " : "") << report.excluded[i];
    os << "]\n}\n";
    return os.str();
}

std::string cv_report_json(const CvReport& report, std::uint64_t seed, std::size_t n_eyes) {
    std::ostringstream os;
    os << "{\n  \"kind\": \"cv\",\n  \"seed\": " << seed << ",\n  \"n_eyes\": " << n_eyes
       << ",\n  \"folds\": " << report.folds << ",\n";
    append_summary(os, "auc_odd", report.auc_odd, false);
    append_summary(os, "auc_papilledema", report.auc_papilledema, false);
    append_summary(os, "auc_healthy", report.auc_healthy, false);
    append_summary(os, "accuracy", report.accuracy, true);
    os << "}\n";
    return os.str();
}

} // namespace onh
