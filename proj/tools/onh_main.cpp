#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "onh/common.hpp"
#include "onh/compensate.hpp"
#include "onh/evaluate.hpp"
#include "onh/features.hpp"
#include "onh/forest.hpp"
#include "onh/metrics.hpp"
#include "onh/phantom.hpp"
#include "onh/sim.hpp"
#include "onh/text.hpp"
#include "onh/volume.hpp"

namespace {

namespace fs = std::filesystem;
using onh::Error;

struct GlobalOpts {
    std::uint64_t seed = 0;
    int threads = 1;
    bool quiet = false;
};

struct ForestFlags {
    int trees = 100;
    int mtry = 1;
    int max_depth = -1; // -1 = unbounded
    int min_leaf = 1;
    bool no_bootstrap = false;
    std::string class_weight = "none";

    void attach(CLI::App* cmd) {
        cmd->add_option("--trees", trees, "number of trees")->capture_default_str();
        cmd->add_option("--mtry", mtry, "features tried per split")->capture_default_str();
        cmd->add_option("--max-depth", max_depth, "tree depth bound, -1 for unbounded")
            ->capture_default_str();
        cmd->add_option("--min-leaf", min_leaf, "minimum samples per leaf")
            ->capture_default_str();
        cmd->add_flag("--no-bootstrap", no_bootstrap, "train every tree on the full set");
        cmd->add_option("--class-weight", class_weight, "none or balanced")
            ->check(CLI::IsMember({"none", "balanced"}))
            ->capture_default_str();
    }

    onh::ForestParams params(std::uint64_t seed) const {
        onh::ForestParams p;
        p.n_trees = trees;
        p.mtry = mtry;
        if (max_depth >= 0)
            p.max_depth = max_depth;
        p.min_leaf = min_leaf;
        p.bootstrap = !no_bootstrap;
        p.seed = seed;
        p.balanced_class_weights = class_weight == "balanced";
        return p;
    }

    std::string describe() const {
        std::ostringstream os;
        os << "trees=" << trees << " mtry=" << mtry << " max_depth="
           << (max_depth >= 0 ? std::to_string(max_depth) : std::string("none"))
           << " min_leaf=" << min_leaf << " bootstrap=" << (no_bootstrap ? "false" : "true")
           << " class_weight=" << class_weight;
        return os.str();
    }
};

void echo_config(const GlobalOpts& g, const std::string& detail) {
    onh::log::info("config: " + detail + " seed=" + std::to_string(g.seed) +
                   " threads=" + std::to_string(g.threads));
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot open " + path.string() + " for writing");
    f << text;
    if (!f.flush())
        throw Error("write failed: " + path.string());
}

// ---- phantom gen ----

struct PhantomGenOpts {
    std::string preset;
    std::string spec_path;
    std::string out;
    bool render = false;
};

int cmd_phantom_gen(const GlobalOpts& g, const PhantomGenOpts& o) {
    if (o.preset.empty() && o.spec_path.empty()) {
        std::cerr << "phantom gen: give --preset or --spec\n";
        return 1;
    }
    echo_config(g, "phantom gen preset=" + (o.preset.empty() ? "-" : o.preset) +
                       " spec=" + (o.spec_path.empty() ? "-" : o.spec_path) + " out=" + o.out +
                       " render=" + (o.render ? "true" : "false"));
    const onh::PhantomSpec spec =
        o.preset.empty() ? onh::read_phantom_spec(o.spec_path) : onh::phantom_preset(o.preset);
    const onh::LabelVolume labels = onh::gen_labels(spec, g.seed, g.threads);
    onh::save_volume(labels, o.out + "_labels");
    onh::write_phantom_spec(spec, o.out + "_spec.txt");
    onh::write_analytic_sidecar(onh::analytic_volumes(spec), o.out + "_analytic.txt");
    if (o.render) {
        const onh::IntensityVolume img = onh::render_intensity(labels, spec, g.seed, g.threads);
        onh::save_volume(img, o.out + "_intensity");
    }
    onh::log::info("wrote " + o.out + "_labels" + (o.render ? " and intensity volume" : ""));
    return 0;
}

// ---- compensate ----

struct CompensateOpts {
    std::string in;
    std::string out;
    double contrast_exp = 2.0;
    double threshold_exp = 12.0;
    bool no_rescale = false;
};

int cmd_compensate(const GlobalOpts& g, const CompensateOpts& o) {
    echo_config(g, "compensate in=" + o.in + " out=" + o.out +
                       " contrast_exp=" + onh::format_double(o.contrast_exp) +
                       " threshold_exp=" + onh::format_double(o.threshold_exp) +
                       " rescale=" + (o.no_rescale ? "false" : "true"));
    onh::CompensationParams params;
    params.contrast_exp = o.contrast_exp;
    params.threshold_exp = o.threshold_exp;
    params.rescale_per_bscan = !o.no_rescale;
    const onh::IntensityVolume vol = onh::load_intensity_volume(o.in);
    const onh::IntensityVolume comp =
        onh::compensate_volume(onh::normalize_intensity(vol), params, g.threads);
    onh::save_volume(comp, o.out);
    onh::log::info("wrote " + o.out);
    return 0;
}

// ---- score ----

struct ScoreOpts {
    std::string labels;
    std::string eye_id;
    std::string subject_id;
    std::string true_class;
    int min_island = 0;
    std::string out;
};

int cmd_score(const GlobalOpts& g, const ScoreOpts& o) {
    echo_config(g, "score labels=" + o.labels + " eye_id=" + o.eye_id +
                       " subject_id=" + o.subject_id +
                       " true_class=" + (o.true_class.empty() ? "-" : o.true_class) +
                       " min_island=" + std::to_string(o.min_island) + " out=" + o.out);
    onh::LabelVolume labels = onh::load_label_volume(o.labels);
    if (o.min_island > 0)
        labels = onh::remove_small_islands(labels, onh::TissueClass::Odd, o.min_island);
    std::optional<onh::EyeClass> cls;
    if (!o.true_class.empty())
        cls = onh::eye_class_from_string(o.true_class);
    const onh::EyeFeatures row = onh::extract_features(labels, o.eye_id, o.subject_id, cls);
    onh::append_scores_csv(o.out, row);
    onh::log::info("appended " + o.eye_id + " to " + o.out);
    return 0;
}

// ---- train ----

struct TrainOpts {
    std::string scores;
    std::string model;
    ForestFlags forest;
};

int cmd_train(const GlobalOpts& g, const TrainOpts& o) {
    echo_config(g, "train scores=" + o.scores + " model=" + o.model + " " +
                       o.forest.describe());
    const auto rows = onh::read_scores_csv(o.scores);
    const onh::ForestParams params = o.forest.params(g.seed);
    if (params.bootstrap) {
        const onh::TrainResult tr = onh::train_forest_with_oob(rows, params, g.threads);
        onh::save_model(tr.model, o.model);
        try {
            onh::log::info("oob_accuracy=" + onh::format_g6(onh::oob_accuracy(tr, rows)));
        } catch (const Error&) {
            // tiny training sets may leave no sample out of bag
        }
    } else {
        onh::save_model(onh::train_forest(rows, params, g.threads), o.model);
    }
    onh::log::info("wrote " + o.model);
    return 0;
}

// ---- predict ----

struct PredictOpts {
    std::string model;
    std::string scores;
    std::string out;
};

void write_preds_csv(const fs::path& path, const std::vector<onh::EyeFeatures>& rows,
                     const onh::ForestModel& model) {
    std::ostringstream os;
    os << "eye_id,subject_id,true_class,p_odd,p_papilledema,p_healthy,predicted_class\n";
    for (const auto& r : rows) {
        const auto probs = onh::predict_proba(model, r.feature_vector());
        const auto cls = onh::predict_class(model, r.feature_vector());
        os << r.eye_id << "," << r.subject_id << ","
           << (r.true_class ? onh::to_string(*r.true_class) : "") << ","
           << onh::format_double(probs[0]) << "," << onh::format_double(probs[1]) << ","
           << onh::format_double(probs[2]) << "," << onh::to_string(cls) << "\n";
    }
    write_text_file(path, os.str());
}

int cmd_predict(const GlobalOpts& g, const PredictOpts& o) {
    echo_config(g, "predict model=" + o.model + " scores=" + o.scores + " out=" + o.out);
    const onh::ForestModel model = onh::load_model(o.model);
    const auto rows = onh::read_scores_csv(o.scores);
    write_preds_csv(o.out, rows, model);
    onh::log::info("wrote " + o.out);
    return 0;
}

// ---- evaluate ----

struct EvalDiceOpts {
    std::string pred;
    std::string truth;
    std::string out;
};

int cmd_evaluate_dice(const GlobalOpts& g, const EvalDiceOpts& o) {
    echo_config(g, "evaluate dice pred=" + o.pred + " truth=" + o.truth + " out=" + o.out);
    const onh::LabelVolume pred = onh::load_label_volume(o.pred);
    const onh::LabelVolume truth = onh::load_label_volume(o.truth);
    write_text_file(o.out, onh::dice_report_json(onh::dice_report(pred, truth)));
    onh::log::info("wrote " + o.out);
    return 0;
}

struct EvalCvOpts {
    std::string scores;
    int folds = 5;
    std::string out;
    ForestFlags forest;
};

int cmd_evaluate_cv(const GlobalOpts& g, const EvalCvOpts& o) {
    echo_config(g, "evaluate cv scores=" + o.scores + " folds=" + std::to_string(o.folds) +
                       " out=" + o.out + " " + o.forest.describe());
    const auto rows = onh::read_scores_csv(o.scores);
    const onh::CvReport rep =
        onh::cross_validate(rows, o.folds, o.forest.params(g.seed), g.seed, g.threads);
    write_text_file(o.out, onh::cv_report_json(rep, g.seed, rows.size()));
    onh::log::info("wrote " + o.out);
    return 0;
}

// ---- repro ----

struct ReproOpts {
    std::string out = "repro_report.json";
    bool collapsed = false;
    ForestFlags forest;
};

int cmd_repro(const GlobalOpts& g, const ReproOpts& o) {
    echo_config(g, "repro out=" + o.out +
                       " classes_collapsed=" + (o.collapsed ? "true" : "false") + " " +
                       o.forest.describe());
    const onh::ReproResult res =
        onh::run_repro(g.seed, o.collapsed, o.forest.params(g.seed), g.threads);
    write_text_file(o.out, res.report_json);
    if (!res.pass) {
        std::cerr << "repro: FAIL (thresholds not met; see " << o.out << ")\n";
        return 3;
    }
    if (!onh::log::quiet())
        std::cout << "repro: pass (report " << o.out << ")\n";
    return 0;
}

// ---- pipeline ----

struct PipelineOpts {
    std::vector<std::string> stems;
    std::string model;
    std::string out;
    std::string preds = "preds.csv";
    int min_island = 0;
};

int cmd_pipeline(const GlobalOpts& g, const PipelineOpts& o) {
    echo_config(g, "pipeline stems=" + std::to_string(o.stems.size()) +
                       " model=" + (o.model.empty() ? "-" : o.model) + " out=" + o.out +
                       " min_island=" + std::to_string(o.min_island));
    bool any_failed = false;
    std::vector<onh::EyeFeatures> rows;
    for (const auto& stem : o.stems) {
        try {
            onh::LabelVolume labels = onh::load_label_volume(stem);
            if (o.min_island > 0)
                labels = onh::remove_small_islands(labels, onh::TissueClass::Odd, o.min_island);
            const std::string id = fs::path(stem).filename().string();
            rows.push_back(onh::extract_features(labels, id, id));
        } catch (const Error& e) {
            std::cerr << "error: " << stem << ": " << e.what() << "\n";
            any_failed = true;
        }
    }
    onh::write_scores_csv(o.out, rows);
    onh::log::info("wrote " + o.out + " (" + std::to_string(rows.size()) + " rows)");
    if (!o.model.empty()) {
        const onh::ForestModel model = onh::load_model(o.model);
        write_preds_csv(o.preds, rows, model);
        onh::log::info("wrote " + o.preds);
        if (!onh::log::quiet()) {
            for (const auto& r : rows)
                std::cout << r.eye_id << " -> "
                          << onh::to_string(onh::predict_class(model, r.feature_vector()))
                          << "\n";
        }
    }
    return any_failed ? 2 : 0;
}

} // namespace

int main(int argc, char** argv) {
    GlobalOpts g;
    CLI::App app{"optic nerve head OCT toolkit: phantoms, compensation, scores, "
                 "classification, evaluation"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--seed", g.seed, "root seed for all randomized steps")
        ->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads")
        ->check(CLI::Range(1, 1024))
        ->capture_default_str();
    app.add_flag("--quiet", g.quiet, "suppress config echo and progress messages");

    PhantomGenOpts phantom_gen;
    auto* phantom = app.add_subcommand("phantom", "synthetic volume generation");
    phantom->require_subcommand(1);
    phantom->fallthrough();
    auto* gen = phantom->add_subcommand("gen", "rasterize a parametric eye");
    gen->fallthrough();
    auto* preset_opt =
        gen->add_option("--preset", phantom_gen.preset, "healthy, odd, or papilledema")
            ->check(CLI::IsMember({"healthy", "odd", "papilledema"}));
    auto* spec_opt = gen->add_option("--spec", phantom_gen.spec_path, "phantom spec file")
                         ->check(CLI::ExistingFile);
    preset_opt->excludes(spec_opt);
    gen->add_option("--out", phantom_gen.out, "output stem")->required();
    gen->add_flag("--render", phantom_gen.render, "also render an intensity volume");

    CompensateOpts comp;
    auto* comp_cmd = app.add_subcommand("compensate", "attenuation-compensate a volume");
    comp_cmd->fallthrough();
    comp_cmd->add_option("--in", comp.in, "input intensity stem")->required();
    comp_cmd->add_option("--out", comp.out, "output stem")->required();
    comp_cmd->add_option("--contrast-exp", comp.contrast_exp, "contrast exponent")
        ->capture_default_str();
    comp_cmd->add_option("--threshold-exp", comp.threshold_exp, "noise-floor exponent")
        ->capture_default_str();
    comp_cmd->add_flag("--no-rescale", comp.no_rescale, "skip per-B-scan [0,1] rescale");

    ScoreOpts score;
    auto* score_cmd = app.add_subcommand("score", "append one eye's scores to a CSV");
    score_cmd->fallthrough();
    score_cmd->add_option("--labels", score.labels, "label volume stem")->required();
    score_cmd->add_option("--eye-id", score.eye_id, "eye identifier")->required();
    score_cmd->add_option("--subject-id", score.subject_id, "subject identifier")->required();
    score_cmd->add_option("--true-class", score.true_class, "known condition")
        ->check(CLI::IsMember({"odd", "papilledema", "healthy"}));
    score_cmd->add_option("--min-island", score.min_island, "drop class-8 islands smaller than N voxels")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    score_cmd->add_option("--out", score.out, "scores CSV to append to")->required();

    TrainOpts train;
    auto* train_cmd = app.add_subcommand("train", "fit the random forest");
    train_cmd->fallthrough();
    train_cmd->add_option("--scores", train.scores, "training scores CSV")->required();
    train_cmd->add_option("--model", train.model, "model file to write")->required();
    train.forest.attach(train_cmd);

    PredictOpts predict;
    auto* predict_cmd = app.add_subcommand("predict", "classify scored eyes");
    predict_cmd->fallthrough();
    predict_cmd->add_option("--model", predict.model, "model file")->required();
    predict_cmd->add_option("--scores", predict.scores, "scores CSV")->required();
    predict_cmd->add_option("--out", predict.out, "predictions CSV")->required();

    auto* evaluate = app.add_subcommand("evaluate", "segmentation and classifier metrics");
    evaluate->require_subcommand(1);
    evaluate->fallthrough();
    EvalDiceOpts dice;
    auto* dice_cmd = evaluate->add_subcommand("dice", "overlap report for two label volumes");
    dice_cmd->fallthrough();
    dice_cmd->add_option("--pred", dice.pred, "predicted labels stem")->required();
    dice_cmd->add_option("--truth", dice.truth, "reference labels stem")->required();
    dice_cmd->add_option("--out", dice.out, "report path")->required();
    EvalCvOpts cv;
    auto* cv_cmd = evaluate->add_subcommand("cv", "grouped cross-validated classification");
    cv_cmd->fallthrough();
    cv_cmd->add_option("--scores", cv.scores, "scores CSV with true classes")->required();
    cv_cmd->add_option("--folds", cv.folds, "fold count")->capture_default_str();
    cv_cmd->add_option("--out", cv.out, "report path")->required();
    cv.forest.attach(cv_cmd);

    ReproOpts repro;
    auto* repro_cmd = app.add_subcommand("repro", "simulated end-to-end study");
    repro_cmd->fallthrough();
    repro_cmd->add_option("--out", repro.out, "report path")->capture_default_str();
    repro_cmd->add_flag("--classes-collapsed", repro.collapsed,
                        "draw all classes from one cluster (null check)");
    repro.forest.attach(repro_cmd);

    PipelineOpts pipeline;
    auto* pipe_cmd = app.add_subcommand("pipeline", "score (and classify) many volumes");
    pipe_cmd->fallthrough();
    pipe_cmd->add_option("stems", pipeline.stems, "label volume stems");
    pipe_cmd->add_option("--model", pipeline.model, "optional model for predictions");
    pipe_cmd->add_option("--out", pipeline.out, "scores CSV")->required();
    pipe_cmd->add_option("--preds", pipeline.preds, "predictions CSV")->capture_default_str();
    pipe_cmd->add_option("--min-island", pipeline.min_island,
                         "drop class-8 islands smaller than N voxels")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    onh::log::set_quiet(g.quiet);

    try {
        if (gen->parsed())
            return cmd_phantom_gen(g, phantom_gen);
        if (comp_cmd->parsed())
            return cmd_compensate(g, comp);
        if (score_cmd->parsed())
            return cmd_score(g, score);
        if (train_cmd->parsed())
            return cmd_train(g, train);
        if (predict_cmd->parsed())
            return cmd_predict(g, predict);
        if (dice_cmd->parsed())
            return cmd_evaluate_dice(g, dice);
        if (cv_cmd->parsed())
            return cmd_evaluate_cv(g, cv);
        if (repro_cmd->parsed())
            return cmd_repro(g, repro);
        if (pipe_cmd->parsed())
            return cmd_pipeline(g, pipeline);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cerr << "no subcommand\n";
    return 1;
}
