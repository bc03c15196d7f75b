#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "onh/features.hpp"
#include "onh/forest.hpp"

namespace onh {

// Reported per-condition score clusters (mean, sd in mm^3) and cohort sizes
// used by the end-to-end reproduction run.
struct ClusterStat {
    std::size_t count;
    double drusen_mean, drusen_sd;
    double swelling_mean, swelling_sd;
};

const std::array<ClusterStat, kNumEyeClasses>& cohort_stats();

// Draws eye features from per-class truncated-at-zero Gaussians; about 15% of
// eyes share a subject with a same-class fellow eye. With collapsed = true all
// classes draw from the healthy cluster (labels kept), a null cohort for
// sanity-checking that discrimination vanishes.
std::vector<EyeFeatures> simulate_cohort(std::uint64_t seed, bool collapsed = false);

struct ReproThresholds {
    double min_mean_auc = 0.95;
    double min_mean_accuracy = 0.88;
};

struct ReproResult {
    bool pass = false;
    std::string report_json;
};

// Simulated end-to-end experiment: cohort, grouped 50/50 holdout, grouped
// 5-fold cross-validation, gated on the CV means.
ReproResult run_repro(std::uint64_t seed, bool collapsed, const ForestParams& params,
                      int n_threads = 1, const ReproThresholds& thresholds = {});

} // namespace onh
