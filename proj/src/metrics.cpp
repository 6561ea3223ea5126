#include "motionid/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "motionid/errors.hpp"
#include "motionid/rng.hpp"
#include "motionid/util.hpp"

namespace motionid {

void PredictionMatrix::check_valid() const {
    for (const auto& row : rows)
        if (row.true_class < 0 || static_cast<size_t>(row.true_class) >= classes.size())
            throw InternalError("prediction row with out-of-range true class");
    for (size_t r = 0; r < n_rows(); ++r) {
        double sum = 0.0;
        for (size_t c = 0; c < n_classes(); ++c) {
            double v = at(r, c);
            if (v < 0.0) throw InternalError("negative prediction score");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw InternalError("prediction row does not sum to 1");
    }
}

const char* tie_policy_name(TiePolicy p) {
    return p == TiePolicy::half ? "half" : "strict";
}

namespace {

// True when class c beats the true class a in the argmax ordering: higher
// score, or equal score at a lower index.
bool beats(double score_c, size_t c, double score_a, size_t a) {
    return score_c > score_a || (score_c == score_a && c < a);
}

size_t count_beaters(const PredictionMatrix& pred, size_t r) {
    size_t a = static_cast<size_t>(pred.rows[r].true_class);
    double sa = pred.at(r, a);
    size_t n = 0;
    for (size_t c = 0; c < pred.n_classes(); ++c)
        if (c != a && beats(pred.at(r, c), c, sa, a)) ++n;
    return n;
}

}  // namespace

double accuracy(const PredictionMatrix& pred) {
    if (pred.n_rows() == 0) throw DataError("accuracy: empty prediction matrix");
    size_t correct = 0;
    for (size_t r = 0; r < pred.n_rows(); ++r)
        if (count_beaters(pred, r) == 0) ++correct;
    return static_cast<double>(correct) / pred.n_rows();
}

double pairwise_auc(std::span<const double> a_scores, std::span<const double> b_scores,
                    TiePolicy policy) {
    if (a_scores.empty() || b_scores.empty())
        throw DataError("pairwise_auc: empty side");

    // Tag and sort the pooled scores; walk runs of equal values, counting how
    // many b values lie strictly below each a (plus tie credit).
    std::vector<std::pair<double, int>> pooled;
    pooled.reserve(a_scores.size() + b_scores.size());
    for (double v : a_scores) pooled.push_back({v, 0});
    for (double v : b_scores) pooled.push_back({v, 1});
    std::sort(pooled.begin(), pooled.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });

    double wins = 0.0;
    size_t b_below = 0;
    size_t i = 0;
    while (i < pooled.size()) {
        size_t j = i;
        size_t run_a = 0, run_b = 0;
        while (j < pooled.size() && pooled[j].first == pooled[i].first) {
            if (pooled[j].second == 0) ++run_a;
            else ++run_b;
            ++j;
        }
        wins += static_cast<double>(run_a) * b_below;
        if (policy == TiePolicy::half) wins += 0.5 * run_a * run_b;
        b_below += run_b;
        i = j;
    }
    return wins / (static_cast<double>(a_scores.size()) * b_scores.size());
}

double pairwise_auc_oracle(std::span<const double> a_scores,
                           std::span<const double> b_scores, TiePolicy policy) {
    if (a_scores.empty() || b_scores.empty())
        throw DataError("pairwise_auc_oracle: empty side");
    double total = 0.0;
    for (double a : a_scores)
        for (double b : b_scores) {
            if (a > b) total += 1.0;
            else if (a == b && policy == TiePolicy::half) total += 0.5;
        }
    return total / (static_cast<double>(a_scores.size()) * b_scores.size());
}

namespace {

std::vector<std::vector<double>> column_scores_by_class(const PredictionMatrix& pred,
                                                        size_t column) {
    std::vector<std::vector<double>> by_class(pred.n_classes());
    for (size_t r = 0; r < pred.n_rows(); ++r)
        by_class[pred.rows[r].true_class].push_back(pred.at(r, column));
    return by_class;
}

}  // namespace

double multiclass_auc(const PredictionMatrix& pred, TiePolicy policy,
                      size_t* n_skipped_classes) {
    std::vector<size_t> populated;
    std::vector<size_t> row_count(pred.n_classes(), 0);
    for (const auto& row : pred.rows) ++row_count[row.true_class];
    for (size_t c = 0; c < pred.n_classes(); ++c)
        if (row_count[c] > 0) populated.push_back(c);
    if (n_skipped_classes) *n_skipped_classes = pred.n_classes() - populated.size();
    if (populated.size() < 2)
        throw DataError("multiclass_auc: fewer than 2 populated classes");

    double total = 0.0;
    size_t n_pairs = 0;
    for (size_t a : populated) {
        auto by_class = column_scores_by_class(pred, a);
        for (size_t b : populated) {
            if (a == b) continue;
            total += pairwise_auc(by_class[a], by_class[b], policy);
            ++n_pairs;
        }
    }
    return total / n_pairs;
}

double multiclass_auc_oracle(const PredictionMatrix& pred, TiePolicy policy) {
    std::vector<size_t> populated;
    {
        std::vector<size_t> row_count(pred.n_classes(), 0);
        for (const auto& row : pred.rows) ++row_count[row.true_class];
        for (size_t c = 0; c < pred.n_classes(); ++c)
            if (row_count[c] > 0) populated.push_back(c);
    }
    if (populated.size() < 2)
        throw DataError("multiclass_auc_oracle: fewer than 2 populated classes");

    double total = 0.0;
    size_t n_pairs = 0;
    for (size_t a : populated) {
        for (size_t b : populated) {
            if (a == b) continue;
            double wins = 0.0;
            size_t n_products = 0;
            for (size_t ra = 0; ra < pred.n_rows(); ++ra) {
                if (static_cast<size_t>(pred.rows[ra].true_class) != a) continue;
                for (size_t rb = 0; rb < pred.n_rows(); ++rb) {
                    if (static_cast<size_t>(pred.rows[rb].true_class) != b) continue;
                    double sa = pred.at(ra, a);
                    double sb = pred.at(rb, a);
                    if (sa > sb) wins += 1.0;
                    else if (sa == sb && policy == TiePolicy::half) wins += 0.5;
                    ++n_products;
                }
            }
            total += wins / n_products;
            ++n_pairs;
        }
    }
    return total / n_pairs;
}

double n_class_accuracy(const PredictionMatrix& pred, size_t n) {
    if (n < 1 || n > pred.n_classes())
        throw ConfigError("n_class_accuracy: N out of range");
    if (pred.n_rows() == 0) throw DataError("n_class_accuracy: empty matrix");
    size_t k = pred.n_classes();
    double total = 0.0;
    for (size_t r = 0; r < pred.n_rows(); ++r) {
        size_t err = count_beaters(pred, r);
        if (k - err < n) continue;  // probability 0
        // C(k - err, n) / C(k, n) as a running product of exact ratios.
        double p = 1.0;
        for (size_t i = 0; i < n; ++i)
            p *= static_cast<double>(k - err - i) / static_cast<double>(k - i);
        total += p;
    }
    return total / pred.n_rows();
}

double n_class_accuracy_oracle(const PredictionMatrix& pred, size_t n,
                               SubsetConvention convention) {
    size_t k = pred.n_classes();
    if (n < 1 || n > k) throw ConfigError("n_class_accuracy_oracle: N out of range");
    if (k > 20) throw ConfigError("n_class_accuracy_oracle: too many classes to enumerate");

    double total = 0.0;
    size_t n_terms = 0;
    std::vector<size_t> subset(n);
    for (size_t r = 0; r < pred.n_rows(); ++r) {
        size_t a = static_cast<size_t>(pred.rows[r].true_class);
        // Enumerate all size-n subsets of the classes.
        std::vector<char> pick(k, 0);
        std::fill(pick.end() - n, pick.end(), 1);
        size_t correct = 0, considered = 0;
        do {
            size_t m = 0;
            bool has_true = false;
            for (size_t c = 0; c < k; ++c)
                if (pick[c]) {
                    subset[m++] = c;
                    if (c == a) has_true = true;
                }
            if (convention == SubsetConvention::conditioned && !has_true) continue;
            ++considered;
            if (convention == SubsetConvention::paper) {
                bool any_error = false;
                for (size_t i = 0; i < n; ++i)
                    if (subset[i] != a &&
                        beats(pred.at(r, subset[i]), subset[i], pred.at(r, a), a))
                        any_error = true;
                if (!any_error) ++correct;
            } else {
                // Literal argmax over the subset with the lowest-index tie
                // break; counts iff the winner is the true class.
                size_t best = subset[0];
                for (size_t i = 1; i < n; ++i)
                    if (pred.at(r, subset[i]) > pred.at(r, best)) best = subset[i];
                if (best == a) ++correct;
            }
        } while (std::next_permutation(pick.begin(), pick.end()));
        total += static_cast<double>(correct) / considered;
        n_terms += 1;
    }
    return total / n_terms;
}

namespace {

std::vector<double> midranks(std::span<const double> v) {
    size_t n = v.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && v[order[j]] == v[order[i]]) ++j;
        double mid = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
        for (size_t t = i; t < j; ++t) ranks[order[t]] = mid;
        i = j;
    }
    return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ConfigError("spearman_rho: need two equal-length samples");
    return pearson(midranks(x), midranks(y));
}

double spearman_permutation_p_negative(std::span<const double> x,
                                       std::span<const double> y, int n_permutations,
                                       uint64_t seed) {
    if (n_permutations < 1) throw ConfigError("permutation test: need >= 1 permutation");
    double observed = spearman_rho(x, y);
    std::vector<double> rx = midranks(x);
    std::vector<double> ry = midranks(y);
    Rng rng = Rng(seed).derive("spearman-permutation");
    size_t at_most = 0;
    std::vector<double> shuffled = ry;
    for (int p = 0; p < n_permutations; ++p) {
        for (size_t i = shuffled.size() - 1; i > 0; --i) {
            size_t j = rng.next_below(i + 1);
            std::swap(shuffled[i], shuffled[j]);
        }
        if (pearson(rx, shuffled) <= observed) ++at_most;
    }
    return static_cast<double>(1 + at_most) / (n_permutations + 1);
}

std::string EvaluationReport::to_json() const {
    nlohmann::ordered_json j;
    j["design"] = design;
    j["params_digest"] = params_digest;
    j["accuracy"] = accuracy;
    j["multiclass_auc"] = multiclass_auc;
    nlohmann::ordered_json acc;
    for (const auto& [n, v] : n_class_accuracy) acc[std::to_string(n)] = v;
    j["n_class_accuracy"] = acc;
    j["sessions"] = n_sessions;
    j["classes"] = n_classes;
    j["seed"] = seed;
    j["tie_policy"] = tie_policy_name(tie_policy);
    return j.dump(2) + "\n";
}

std::string EvaluationReport::csv_header(const std::vector<size_t>& n_values) {
    std::string h = "design,params_digest,accuracy,multiclass_auc";
    for (size_t n : n_values) h += ",acc_at_" + std::to_string(n);
    h += ",sessions,classes,seed,tie_policy";
    return h + "\n";
}

std::string EvaluationReport::to_csv_row(const std::vector<size_t>& n_values) const {
    std::string r = design + "," + params_digest + "," + format_double(accuracy) + "," +
                    format_double(multiclass_auc);
    for (size_t n : n_values) {
        auto it = n_class_accuracy.find(n);
        r += ",";
        r += (it == n_class_accuracy.end() ? "" : format_double(it->second));
    }
    r += "," + std::to_string(n_sessions) + "," + std::to_string(n_classes) + "," +
         std::to_string(seed) + "," + tie_policy_name(tie_policy);
    return r + "\n";
}

EvaluationReport evaluate(const PredictionMatrix& pred, const std::string& design,
                          const std::string& params_digest,
                          const std::vector<size_t>& n_values, uint64_t seed,
                          TiePolicy policy) {
    pred.check_valid();
    EvaluationReport report;
    report.design = design;
    report.params_digest = params_digest;
    report.accuracy = motionid::accuracy(pred);
    report.multiclass_auc = motionid::multiclass_auc(pred, policy);
    for (size_t n : n_values)
        if (n >= 1 && n <= pred.n_classes())
            report.n_class_accuracy[n] = motionid::n_class_accuracy(pred, n);
    report.n_sessions = pred.n_rows();
    report.n_classes = pred.n_classes();
    report.seed = seed;
    report.tie_policy = policy;
    return report;
}

}  // namespace motionid
