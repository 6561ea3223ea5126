#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "motionid/features.hpp"
#include "motionid/forest.hpp"
#include "motionid/metrics.hpp"
#include "motionid/splits.hpp"

// End-to-end experiment designs over trace directories. Every run is a pure
// function of (trace bytes, config, seed): reports and CSVs are byte-stable
// across reruns and thread counts. Wall-clock timings go to a separate
// timings.log so they never perturb the comparable outputs.

namespace motionid {

inline constexpr const char* kToolVersion = "0.1.0";

// Named forest sizes: "full" (20 trees x 30 draws), "duration" (5 x 3),
// "delay" (30 x 3). Throws ConfigError on unknown names.
ForestParams forest_profile(const std::string& name);

struct ExperimentConfig {
    std::string traces;  // file, directory, or glob
    std::string preset = "M6";
    std::set<int> train_weeks = {1, 2, 3, 4, 5, 6};
    std::set<int> test_weeks = {7, 8};
    std::vector<size_t> n_values = {2, 3, 5, 10, 30};
    std::vector<int> duration_sessions = {1, 2, 4, 7};
    std::vector<int> duration_minutes = {1, 3, 10, 30};
    int monte_carlo = 10;
    std::string forest;       // profile name; empty picks the design default
    int trees_per_draw = 0;   // > 0 overrides the profile
    int n_draws = 0;          // > 0 overrides the profile
    uint64_t rows_per_draw = 100000;
    double train_fraction = 0.8;
    double buffer_s = 60.0;
    double min_session_s = 300.0;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    std::string cache_dir;  // empty = out_dir + "/cache"

    void validate(const std::string& design) const;
    ForestParams forest_params(const std::string& design) const;
    // Canonical parameter text for digests; excludes paths, includes the
    // cohort digest so a different trace set never reuses a digest.
    std::string digest_text(const std::string& design, uint64_t cohort_digest) const;

    static ExperimentConfig from_json_file(const std::string& path);
};

struct IdentificationResult {
    EvaluationReport between;
    EvaluationReport within;
    size_t skipped_between_sessions = 0;
    size_t skipped_within_sessions = 0;
};

struct DurationCell {
    int n_sessions = 0;
    int minutes = 0;
    int reps = 0;  // Monte Carlo repetitions that produced a value
    double mean_auc = 0.0;
    double sd_auc = 0.0;
};

struct DurationResult {
    std::vector<DurationCell> between;  // session grid x minute grid, row major
    std::vector<DurationCell> within;
};

struct DelayCell {
    int train_week = 0;
    int test_week = 0;
    double auc = 0.0;
    size_t n_test_sessions = 0;
};

struct DelayResult {
    std::vector<DelayCell> cells;  // ordered by (train_week, test_week)
    size_t n_skipped_cells = 0;
    double spearman_rho = 0.0;
    double permutation_p = 0.0;
    int n_permutations = 1000;
};

struct AblationRow {
    std::string preset;
    size_t n_features = 0;
    EvaluationReport report;
};

struct AblationResult {
    std::vector<AblationRow> rows;  // M1..M6
};

// The four designs. Each validates the config, loads and featurizes traces
// (through the on-disk cache), writes CSV + JSON + manifest + timings under
// config.out_dir, and returns the in-memory result.
IdentificationResult run_identification(const ExperimentConfig& config);
DurationResult run_duration(const ExperimentConfig& config);
DelayResult run_delay(const ExperimentConfig& config);
AblationResult run_ablation(const ExperimentConfig& config);

// Building blocks shared by the CLI subcommands.

// Expands a file/directory/glob into trace paths, sorted. DataError if empty.
std::vector<std::string> resolve_traces(const std::string& pattern);

struct CohortFeatures {
    std::vector<SessionInfo> infos;  // sorted by session key
    std::vector<std::pair<size_t, size_t>> row_ranges;  // per session, into matrix
    FeatureMatrix matrix;
    uint64_t cohort_digest = 0;  // folded digests of all trace bytes
};

// Parses every trace and featurizes it under each preset, serving unchanged
// (trace, preset, params) combinations from cache_dir. Results come back in
// preset order, all sharing infos/digest.
std::vector<CohortFeatures> load_cohort_features(const std::string& traces,
                                                 const std::vector<FeaturePreset>& presets,
                                                 const FeatureParams& params,
                                                 const std::string& cache_dir);

// Train rows, labels, classes, and test units a split plan selects from a
// featurized cohort. Sessions whose selected spans hold no feature rows are
// dropped and counted.
struct DesignSlice {
    std::vector<std::string> classes;
    std::vector<size_t> train_rows;
    std::vector<int32_t> train_labels;
    std::vector<TestUnit> units;
    size_t skipped_test_sessions = 0;
};

DesignSlice slice_plan(const CohortFeatures& cohort, const SplitPlan& plan);

}  // namespace motionid
