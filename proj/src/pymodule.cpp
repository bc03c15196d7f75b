#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>

#include "onh/compensate.hpp"
#include "onh/evaluate.hpp"
#include "onh/features.hpp"
#include "onh/forest.hpp"
#include "onh/metrics.hpp"
#include "onh/phantom.hpp"
#include "onh/sim.hpp"
#include "onh/volume.hpp"

namespace py = pybind11;

namespace {

onh::VoxelSpacing spacing_from(const std::array<double, 3>& s) {
    return {s[0], s[1], s[2]};
}

onh::Dims dims_from(const py::buffer_info& info) {
    if (info.ndim != 3)
        throw onh::Error("expected a 3-d array ordered (bscan, ascan, depth)");
    return {static_cast<int>(info.shape[0]), static_cast<int>(info.shape[1]),
            static_cast<int>(info.shape[2])};
}

onh::IntensityVolume intensity_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr,
                                          const std::array<double, 3>& spacing) {
    const py::buffer_info info = arr.request();
    const onh::Dims dims = dims_from(info);
    const float* p = static_cast<const float*>(info.ptr);
    return onh::make_intensity_volume(dims, spacing_from(spacing),
                                      std::vector<float>(p, p + dims.voxels()));
}

onh::LabelVolume labels_from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& arr,
                                   const std::array<double, 3>& spacing) {
    const py::buffer_info info = arr.request();
    const onh::Dims dims = dims_from(info);
    const std::uint8_t* p = static_cast<const std::uint8_t*>(info.ptr);
    onh::LabelVolume vol = onh::make_label_volume(dims, spacing_from(spacing),
                                                  std::vector<std::uint8_t>(p, p + dims.voxels()));
    onh::validate_volume(vol);
    return vol;
}

py::array_t<float> array_from(const onh::IntensityVolume& vol) {
    py::array_t<float> arr({vol.dims.nb, vol.dims.na, vol.dims.nd});
    std::memcpy(arr.mutable_data(), vol.data.data(), vol.data.size() * sizeof(float));
    return arr;
}

py::array_t<std::uint8_t> array_from(const onh::LabelVolume& vol) {
    py::array_t<std::uint8_t> arr({vol.dims.nb, vol.dims.na, vol.dims.nd});
    std::memcpy(arr.mutable_data(), vol.data.data(), vol.data.size());
    return arr;
}

std::vector<onh::EyeFeatures> features_from(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& X,
    const std::vector<std::string>& classes, const std::vector<std::string>* subjects) {
    const py::buffer_info info = X.request();
    if (info.ndim != 2 || info.shape[1] != 2)
        throw onh::Error("X must have shape (n, 2): drusen and swelling scores");
    const auto n = static_cast<std::size_t>(info.shape[0]);
    if (classes.size() != n)
        throw onh::Error("y must have one class per row of X");
    if (subjects && subjects->size() != n)
        throw onh::Error("subjects must have one id per row of X");
    const double* p = static_cast<const double*>(info.ptr);
    std::vector<onh::EyeFeatures> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].eye_id = "E" + std::to_string(i);
        out[i].subject_id = subjects ? (*subjects)[i] : "S" + std::to_string(i);
        out[i].drusen_mm3 = p[2 * i];
        out[i].swelling_mm3 = p[2 * i + 1];
        out[i].true_class = onh::eye_class_from_string(classes[i]);
    }
    return out;
}

py::dict summary_dict(const onh::MetricSummary& s) {
    py::dict d;
    d["per_fold"] = s.per_fold;
    d["mean"] = s.mean;
    d["std"] = s.std_dev;
    return d;
}

constexpr std::array<double, 3> kDefaultSpacing = {0.03, 0.01, 0.0039};

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "optic nerve head OCT toolkit core";

    py::register_exception<onh::Error>(m, "DataError");

    m.def(
        "compensate",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& arr,
           double contrast_exp, double threshold_exp, bool rescale_per_bscan, bool normalize,
           int threads) {
            onh::IntensityVolume vol = intensity_from_array(arr, kDefaultSpacing);
            if (normalize)
                vol = onh::normalize_intensity(vol);
            onh::CompensationParams params;
            params.contrast_exp = contrast_exp;
            params.threshold_exp = threshold_exp;
            params.rescale_per_bscan = rescale_per_bscan;
            return array_from(onh::compensate_volume(vol, params, threads));
        },
        py::arg("volume"), py::arg("contrast_exp") = 2.0, py::arg("threshold_exp") = 12.0,
        py::arg("rescale_per_bscan") = true, py::arg("normalize") = true,
        py::arg("threads") = 1,
        "Adaptive attenuation compensation of a (bscan, ascan, depth) volume.");

    m.def(
        "drusen_score",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& labels,
           const std::array<double, 3>& spacing) {
            return onh::drusen_score_mm3(labels_from_array(labels, spacing));
        },
        py::arg("labels"), py::arg("spacing_mm"),
        "Physical volume (mm^3) of class-8 voxels; spacing is (dz, dx, dy).");

    m.def(
        "swelling_score",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& labels,
           const std::array<double, 3>& spacing) {
            return onh::swelling_score_mm3(labels_from_array(labels, spacing));
        },
        py::arg("labels"), py::arg("spacing_mm"),
        "Physical volume (mm^3) of class 1 and 8 voxels in RPE-free columns.");

    m.def(
        "enface_rpe_mask",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& labels) {
            const onh::LabelVolume vol = labels_from_array(labels, kDefaultSpacing);
            const onh::EnfaceMask mask = onh::enface_rpe_mask(vol);
            py::array_t<bool> arr({mask.nb, mask.na});
            bool* p = arr.mutable_data();
            for (int b = 0; b < mask.nb; ++b)
                for (int a = 0; a < mask.na; ++a)
                    p[b * mask.na + a] = mask.at(b, a);
            return arr;
        },
        py::arg("labels"), "True where a column holds no RPE voxel (inside the BMO).");

    m.def(
        "gen_phantom",
        [](const std::string& preset, std::uint64_t seed, bool render, int threads) {
            const onh::PhantomSpec spec = onh::phantom_preset(preset);
            const onh::LabelVolume labels = onh::gen_labels(spec, seed, threads);
            const onh::AnalyticVolumes av = onh::analytic_volumes(spec);
            py::dict d;
            d["labels"] = array_from(labels);
            d["spacing_mm"] =
                std::array<double, 3>{spec.spacing.dz_mm, spec.spacing.dx_mm, spec.spacing.dy_mm};
            d["analytic_drusen_mm3"] = av.drusen_mm3;
            d["analytic_swelling_mm3"] = av.swelling_mm3;
            if (render)
                d["intensity"] = array_from(onh::render_intensity(labels, spec, seed, threads));
            return d;
        },
        py::arg("preset"), py::arg("seed") = 0, py::arg("render") = false,
        py::arg("threads") = 1,
        "Rasterize a named phantom preset; returns labels plus analytic volumes.");

    m.def(
        "load_volume",
        [](const std::string& stem) -> py::object {
            const onh::Volume vol = onh::load_volume(stem);
            py::dict d;
            if (const auto* iv = std::get_if<onh::IntensityVolume>(&vol)) {
                d["data"] = array_from(*iv);
                d["spacing_mm"] = std::array<double, 3>{iv->spacing.dz_mm, iv->spacing.dx_mm,
                                                        iv->spacing.dy_mm};
            } else {
                const auto& lv = std::get<onh::LabelVolume>(vol);
                d["data"] = array_from(lv);
                d["spacing_mm"] = std::array<double, 3>{lv.spacing.dz_mm, lv.spacing.dx_mm,
                                                        lv.spacing.dy_mm};
            }
            return d;
        },
        py::arg("stem"), "Load <stem>.meta/.raw; dtype of 'data' tells labels from intensity.");

    m.def(
        "save_volume",
        [](const std::string& stem, const py::array& data,
           const std::array<double, 3>& spacing) {
            if (py::isinstance<py::array_t<std::uint8_t>>(data))
                onh::save_volume(labels_from_array(py::cast<py::array_t<std::uint8_t>>(data), spacing),
                                 stem);
            else
                onh::save_volume(
                    intensity_from_array(py::cast<py::array_t<float, py::array::c_style | py::array::forcecast>>(data),
                                         spacing),
                    stem);
        },
        py::arg("stem"), py::arg("data"), py::arg("spacing_mm"),
        "Write <stem>.meta/.raw; uint8 arrays become label volumes, floats intensity.");

    m.def(
        "dice",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& truth,
           int tissue_class) -> std::optional<double> {
            const auto p = pred.request();
            const auto t = truth.request();
            if (p.size != t.size)
                throw onh::Error("dice: arrays differ in size");
            return onh::dice(
                std::span<const std::uint8_t>(static_cast<const std::uint8_t*>(p.ptr),
                                              static_cast<std::size_t>(p.size)),
                std::span<const std::uint8_t>(static_cast<const std::uint8_t*>(t.ptr),
                                              static_cast<std::size_t>(t.size)),
                tissue_class);
        },
        py::arg("pred"), py::arg("truth"), py::arg("tissue_class"),
        "Dice overlap for one class; None when the class is absent from both.");

    m.def(
        "jaccard",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& truth,
           int tissue_class) -> std::optional<double> {
            const auto p = pred.request();
            const auto t = truth.request();
            if (p.size != t.size)
                throw onh::Error("jaccard: arrays differ in size");
            return onh::jaccard(
                std::span<const std::uint8_t>(static_cast<const std::uint8_t*>(p.ptr),
                                              static_cast<std::size_t>(p.size)),
                std::span<const std::uint8_t>(static_cast<const std::uint8_t*>(t.ptr),
                                              static_cast<std::size_t>(t.size)),
                tissue_class);
        },
        py::arg("pred"), py::arg("truth"), py::arg("tissue_class"));

    m.def("roc_auc", &onh::roc_auc, py::arg("scores"), py::arg("positives"),
          "Mann-Whitney AUC with half credit for ties.");

    py::class_<onh::ForestModel>(m, "RandomForest")
        .def_static(
            "train",
            [](const py::array_t<double, py::array::c_style | py::array::forcecast>& X,
               const std::vector<std::string>& y, int trees, int mtry, int max_depth,
               int min_leaf, bool bootstrap, const std::string& class_weight,
               std::uint64_t seed, int threads) {
                onh::ForestParams params;
                params.n_trees = trees;
                params.mtry = mtry;
                if (max_depth >= 0)
                    params.max_depth = max_depth;
                params.min_leaf = min_leaf;
                params.bootstrap = bootstrap;
                params.seed = seed;
                params.balanced_class_weights = class_weight == "balanced";
                return onh::train_forest(features_from(X, y, nullptr), params);
            },
            py::arg("X"), py::arg("y"), py::arg("trees") = 100, py::arg("mtry") = 1,
            py::arg("max_depth") = -1, py::arg("min_leaf") = 1, py::arg("bootstrap") = true,
            py::arg("class_weight") = "none", py::arg("seed") = 0, py::arg("threads") = 1)
        .def_static("load", [](const std::string& path) { return onh::load_model(path); },
                    py::arg("path"))
        .def("save", [](const onh::ForestModel& m_, const std::string& path) {
            onh::save_model(m_, path);
        })
        .def("predict_proba",
             [](const onh::ForestModel& model,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& X) {
                 const auto info = X.request();
                 if (info.ndim != 2 || info.shape[1] != 2)
                     throw onh::Error("X must have shape (n, 2)");
                 const auto n = static_cast<std::size_t>(info.shape[0]);
                 const double* p = static_cast<const double*>(info.ptr);
                 py::array_t<double> out({static_cast<int>(n), 3});
                 double* o = out.mutable_data();
                 for (std::size_t i = 0; i < n; ++i) {
                     const auto probs = onh::predict_proba(model, {p[2 * i], p[2 * i + 1]});
                     o[3 * i] = probs[0];
                     o[3 * i + 1] = probs[1];
                     o[3 * i + 2] = probs[2];
                 }
                 return out;
             },
             py::arg("X"))
        .def("predict",
             [](const onh::ForestModel& model,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& X) {
                 const auto info = X.request();
                 if (info.ndim != 2 || info.shape[1] != 2)
                     throw onh::Error("X must have shape (n, 2)");
                 const auto n = static_cast<std::size_t>(info.shape[0]);
                 const double* p = static_cast<const double*>(info.ptr);
                 std::vector<std::string> out;
                 out.reserve(n);
                 for (std::size_t i = 0; i < n; ++i)
                     out.emplace_back(
                         onh::to_string(onh::predict_class(model, {p[2 * i], p[2 * i + 1]})));
                 return out;
             },
             py::arg("X"))
        .def_property_readonly("n_trees",
                               [](const onh::ForestModel& m_) { return m_.params.n_trees; });

    m.def(
        "cross_validate",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& X,
           const std::vector<std::string>& y, const std::vector<std::string>& subjects,
           int folds, int trees, std::uint64_t seed, int threads) {
            onh::ForestParams params;
            params.n_trees = trees;
            const onh::CvReport rep = onh::cross_validate(features_from(X, y, &subjects), folds,
                                                          params, seed, threads);
            py::dict d;
            d["folds"] = rep.folds;
            d["auc_odd"] = summary_dict(rep.auc_odd);
            d["auc_papilledema"] = summary_dict(rep.auc_papilledema);
            d["auc_healthy"] = summary_dict(rep.auc_healthy);
            d["accuracy"] = summary_dict(rep.accuracy);
            d["fold_of_eye"] = rep.fold_of_eye;
            return d;
        },
        py::arg("X"), py::arg("y"), py::arg("subjects"), py::arg("folds") = 5,
        py::arg("trees") = 100, py::arg("seed") = 0, py::arg("threads") = 1,
        "Grouped stratified k-fold cross-validation of the random forest.");

    m.def(
        "simulate_cohort",
        [](std::uint64_t seed, bool collapsed) {
            const auto cohort = onh::simulate_cohort(seed, collapsed);
            py::list eye_ids, subject_ids, classes;
            py::array_t<double> X({static_cast<int>(cohort.size()), 2});
            double* p = X.mutable_data();
            for (std::size_t i = 0; i < cohort.size(); ++i) {
                eye_ids.append(cohort[i].eye_id);
                subject_ids.append(cohort[i].subject_id);
                classes.append(std::string(onh::to_string(*cohort[i].true_class)));
                p[2 * i] = cohort[i].drusen_mm3;
                p[2 * i + 1] = cohort[i].swelling_mm3;
            }
            py::dict d;
            d["eye_id"] = eye_ids;
            d["subject_id"] = subject_ids;
            d["true_class"] = classes;
            d["X"] = X;
            return d;
        },
        py::arg("seed") = 0, py::arg("collapsed") = false,
        "Draw the simulated 70/30/50 cohort used by the repro command.");

    m.def(
        "run_repro",
        [](std::uint64_t seed, bool collapsed, int threads) {
            const onh::ReproResult res = onh::run_repro(seed, collapsed, {}, threads);
            py::dict d;
            d["pass"] = res.pass;
            d["report_json"] = res.report_json;
            return d;
        },
        py::arg("seed") = 42, py::arg("collapsed") = false, py::arg("threads") = 1,
        "Simulated end-to-end study; report_json holds the full report text.");
}
