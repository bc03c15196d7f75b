#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onh/features.hpp"
#include "onh/forest.hpp"
#include "onh/volume.hpp"

namespace onh {

// 2|A∩B| / (|A|+|B|) over voxels of the given class; empty-on-both-sides is
// undefined rather than 0 or 1.
std::optional<double> dice(std::span<const std::uint8_t> pred,
                           std::span<const std::uint8_t> truth, int tissue_class);
std::optional<double> jaccard(std::span<const std::uint8_t> pred,
                              std::span<const std::uint8_t> truth, int tissue_class);
std::optional<double> dice(const LabelVolume& pred, const LabelVolume& truth, int tissue_class);
std::optional<double> jaccard(const LabelVolume& pred, const LabelVolume& truth,
                              int tissue_class);

struct DiceReport {
    std::array<std::optional<double>, kNumTissueClasses> per_class; // tissue classes 1..8
    std::optional<double> mean; // over classes present in the truth
    std::vector<int> excluded;  // classes 1..8 absent from the truth
};

DiceReport dice_report(const LabelVolume& pred, const LabelVolume& truth);

// Mann-Whitney pair counting with half credit for ties, accumulated in exact
// integer arithmetic (2U) and divided once.
double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positives);

// One-vs-all AUC per class in class order; every class must appear in truth.
std::array<double, kNumEyeClasses> one_vs_all_aucs(
    const std::vector<std::array<double, kNumEyeClasses>>& probs,
    const std::vector<EyeClass>& truth);

double accuracy(const std::vector<EyeClass>& pred, const std::vector<EyeClass>& truth);

// Partitions eyes into fractions.size() parts with whole subjects, stratified
// by each subject's majority class via largest-remainder allocation, so no
// subject spans two parts. Returned parts hold ascending eye indices.
std::vector<std::vector<int>> grouped_split(const std::vector<EyeFeatures>& features,
                                            const std::vector<double>& fractions,
                                            std::uint64_t seed);

struct MetricSummary {
    std::vector<double> per_fold;
    double mean = 0.0;
    double std_dev = 0.0; // sample standard deviation (n-1)
};

struct CvReport {
    int folds = 0;
    MetricSummary auc_odd;
    MetricSummary auc_papilledema;
    MetricSummary auc_healthy;
    MetricSummary accuracy;
    std::vector<int> fold_of_eye;
};

// Grouped stratified k-fold; fold i trains a forest seeded from
// derive_seed(seed, "fold", i) on the other folds and scores the held-out one.
CvReport cross_validate(const std::vector<EyeFeatures>& features, int k,
                        const ForestParams& params, std::uint64_t seed, int n_threads = 1);

struct HoldoutReport {
    double train_fraction = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    double auc_odd = 0.0;
    double auc_papilledema = 0.0;
    double auc_healthy = 0.0;
    double accuracy = 0.0;
};

HoldoutReport holdout_eval(const std::vector<EyeFeatures>& features, double train_fraction,
                           const ForestParams& params, std::uint64_t seed, int n_threads = 1);

std::string dice_report_json(const DiceReport& report);
std::string cv_report_json(const CvReport& report, std::uint64_t seed, std::size_t n_eyes);

} // namespace onh
