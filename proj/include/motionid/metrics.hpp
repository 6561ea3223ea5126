#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "motionid/prediction.hpp"

// Identification metrics. Every metric has an independent brute-force oracle
// used by the test suite; the production implementations here are rank and
// closed-form based.

namespace motionid {

enum class TiePolicy { half, strict };
const char* tie_policy_name(TiePolicy p);

// Fraction of rows whose argmax column is the true class. Argmax ties break
// to the lowest class index.
double accuracy(const PredictionMatrix& pred);

// Probability that a score drawn from a_scores exceeds one from b_scores,
// ties counted per policy (half: 0.5, strict: 0). Rank-sum implementation.
double pairwise_auc(std::span<const double> a_scores, std::span<const double> b_scores,
                    TiePolicy policy = TiePolicy::half);

// Literal double loop over all (a, b) pairs; the testing oracle.
double pairwise_auc_oracle(std::span<const double> a_scores,
                           std::span<const double> b_scores,
                           TiePolicy policy = TiePolicy::half);

// Mean over ordered class pairs (A, B) of pairwise_auc between true-A rows
// and true-B rows, both scored on column A. Classes with no test rows are
// excluded from the average; n_skipped_classes reports how many.
double multiclass_auc(const PredictionMatrix& pred, TiePolicy policy = TiePolicy::half,
                      size_t* n_skipped_classes = nullptr);

// Same value by exhaustive enumeration, for tests.
double multiclass_auc_oracle(const PredictionMatrix& pred,
                             TiePolicy policy = TiePolicy::half);

// Closed-form expected accuracy when prediction is restricted to a uniformly
// random candidate subset of size N. Per row, the count of classes scoring
// strictly above the true class (or tied with it at a lower index, matching
// the argmax tie-break) gives the binomial ratio C(|C|-err, N) / C(|C|, N).
double n_class_accuracy(const PredictionMatrix& pred, size_t n);

enum class SubsetConvention {
    paper,        // all size-N subsets; success = subset avoids every error class
    conditioned,  // only subsets containing the true class; success = argmax wins
};

// Exhaustive subset enumeration oracle for n_class_accuracy. Class counts
// above 20 are rejected (enumeration would be too large).
double n_class_accuracy_oracle(const PredictionMatrix& pred, size_t n,
                               SubsetConvention convention);

// Spearman rank correlation with midranks for ties.
double spearman_rho(std::span<const double> x, std::span<const double> y);

// One-sided permutation test for negative association: p-value of observing
// a Spearman rho as small as the actual one under random pairing.
double spearman_permutation_p_negative(std::span<const double> x,
                                       std::span<const double> y, int n_permutations,
                                       uint64_t seed);

struct EvaluationReport {
    std::string design;
    std::string params_digest;
    double accuracy = 0.0;
    double multiclass_auc = 0.0;
    std::map<size_t, double> n_class_accuracy;  // N -> fraction
    size_t n_sessions = 0;
    size_t n_classes = 0;
    uint64_t seed = 0;
    TiePolicy tie_policy = TiePolicy::half;

    std::string to_json() const;
    static std::string csv_header(const std::vector<size_t>& n_values);
    std::string to_csv_row(const std::vector<size_t>& n_values) const;
};

// Builds the full report from a prediction matrix.
EvaluationReport evaluate(const PredictionMatrix& pred, const std::string& design,
                          const std::string& params_digest,
                          const std::vector<size_t>& n_values, uint64_t seed,
                          TiePolicy policy = TiePolicy::half);

}  // namespace motionid
