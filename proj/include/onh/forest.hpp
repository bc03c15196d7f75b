#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "onh/features.hpp"

namespace onh {

struct ForestParams {
    int n_trees = 100;
    int mtry = 1; // floor(sqrt(2)) of the two score features
    std::optional<int> max_depth;
    int min_leaf = 1;
    bool bootstrap = true;
    std::uint64_t seed = 0;
    bool balanced_class_weights = false;
};

void validate(const ForestParams& params);

// Internal node routes x[feature] < threshold to left; leaves carry the
// class-proportion triple in class order ODD, PAPILLEDEMA, HEALTHY.
struct TreeNode {
    bool is_leaf = true;
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::array<double, kNumEyeClasses> probs{};
};

using Tree = std::vector<TreeNode>; // preorder, node 0 is the root

struct ForestModel {
    ForestParams params;
    std::string rng_id; // generator identifier recorded in the model file
    std::vector<Tree> trees;
};

void validate(const ForestModel& model);

// CART with Gini impurity on bootstrap resamples; candidate thresholds are
// midpoints between consecutive distinct sorted values of the tried feature,
// ties broken toward lower feature index then lower threshold. Deterministic
// given (features, params) for any thread count. A single-class training set
// degenerates to a constant model with a warning.
ForestModel train_forest(const std::vector<EyeFeatures>& features, const ForestParams& params,
                         int n_threads = 1);

struct TrainResult {
    ForestModel model;
    std::vector<std::vector<int>> oob_indices; // per tree, ascending sample indices
};

TrainResult train_forest_with_oob(const std::vector<EyeFeatures>& features,
                                  const ForestParams& params, int n_threads = 1);

// Fraction of samples whose out-of-bag averaged prediction matches the label;
// samples in every bootstrap sample are skipped.
double oob_accuracy(const TrainResult& trained, const std::vector<EyeFeatures>& features);

std::array<double, kNumEyeClasses> predict_proba(const ForestModel& model,
                                                 const std::array<double, 2>& feature);
EyeClass predict_class(const ForestModel& model, const std::array<double, 2>& feature);

void save_model(const ForestModel& model, const std::filesystem::path& path);
ForestModel load_model(const std::filesystem::path& path);

} // namespace onh
