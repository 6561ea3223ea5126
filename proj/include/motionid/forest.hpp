#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motionid/features.hpp"
#include "motionid/prediction.hpp"

// Random-forest identification model. Training and prediction are exactly
// reproducible: given the same matrix, parameters, and seed, the model and
// its votes are identical regardless of thread count.

namespace motionid {

struct ForestParams {
    int trees_per_draw = 20;
    int n_draws = 30;
    size_t rows_per_draw = 100000;  // capped at the training-set size
    int max_depth = 0;              // 0 = unlimited
    size_t min_split = 2;
    uint64_t seed = 1;

    int total_trees() const { return trees_per_draw * n_draws; }
    std::string summary() const;
};

struct TreeNode {
    // Leaves have feature == -1 and carry an index into leaf_class. Interior
    // nodes send a row left when float(row[feature]) <= float(threshold).
    // Split keys are quantized to float32 during training, so thresholds are
    // exactly representable as floats and the two sides compare identically
    // at train and predict time.
    int32_t feature = -1;
    double threshold = 0.0;
    int32_t left = -1;
    int32_t right = -1;
    int32_t leaf = -1;
};

struct Tree {
    std::vector<TreeNode> nodes;
    // Per leaf: majority class (ties to the lowest class index).
    std::vector<int32_t> leaf_class;

    int32_t predict(const double* row) const;
};

struct Forest {
    std::vector<std::string> classes;
    std::vector<std::string> columns;
    uint64_t column_digest = 0;
    ForestParams params;
    std::vector<Tree> trees;

    // Per-row hard votes, normalized to sum 1 across classes.
    std::vector<double> vote_row(const double* row) const;
};

// Labels are row class indices into `classes`; rows index into `matrix`.
Forest train_forest(const FeatureMatrix& matrix, const std::vector<size_t>& rows,
                    const std::vector<int32_t>& labels, const std::vector<std::string>& classes,
                    const ForestParams& params);

// One prediction row per test unit: votes from every sampled row in the unit
// are pooled, so longer units are steadier, shorter ones noisier.
struct TestUnit {
    PredictionRow id;          // identity plus true class index
    std::vector<size_t> rows;  // matrix rows belonging to the unit
};

PredictionMatrix predict_units(const Forest& forest, const FeatureMatrix& matrix,
                               const std::vector<TestUnit>& units);

// Versioned binary model files.
void save_forest(const Forest& forest, const std::string& path);
Forest load_forest(const std::string& path);

}  // namespace motionid
