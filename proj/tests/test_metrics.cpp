#include <doctest.h>

#include <cmath>

#include "motionid/metrics.hpp"
#include "motionid/rng.hpp"

using namespace motionid;

namespace {

PredictionMatrix make_matrix(size_t n_classes, const std::vector<int>& labels,
                             const std::vector<std::vector<double>>& scores) {
    PredictionMatrix m;
    for (size_t c = 0; c < n_classes; ++c) m.classes.push_back("P" + std::to_string(c));
    for (size_t r = 0; r < labels.size(); ++r) {
        m.rows.push_back({"P" + std::to_string(labels[r]), 1, 1, "S", labels[r]});
        for (double v : scores[r]) m.scores.push_back(v);
    }
    return m;
}

PredictionMatrix random_matrix(Rng& rng, size_t n_classes, size_t n_rows,
                               double signal = 1.0) {
    std::vector<int> labels;
    std::vector<std::vector<double>> scores;
    for (size_t r = 0; r < n_rows; ++r) {
        int label = static_cast<int>(rng.next_below(n_classes));
        labels.push_back(label);
        std::vector<double> row(n_classes);
        double sum = 0.0;
        for (size_t c = 0; c < n_classes; ++c) {
            double v = rng.next_double() + (static_cast<int>(c) == label ? signal : 0.0);
            row[c] = v;
            sum += v;
        }
        for (double& v : row) v /= sum;
        scores.push_back(row);
    }
    return make_matrix(n_classes, labels, scores);
}

}  // namespace

TEST_CASE("accuracy basics and tie break") {
    // 5 rows, 3 correct.
    PredictionMatrix m = make_matrix(
        3, {0, 1, 2, 1, 0},
        {{0.8, 0.1, 0.1}, {0.2, 0.6, 0.2}, {0.1, 0.2, 0.7}, {0.5, 0.3, 0.2},
         {0.3, 0.5, 0.2}});
    CHECK(accuracy(m) == doctest::Approx(0.6));

    // Uniform rows: only true label at index 0 counts as correct.
    PredictionMatrix u = make_matrix(4, {0, 1, 2, 3},
                                     {{0.25, 0.25, 0.25, 0.25},
                                      {0.25, 0.25, 0.25, 0.25},
                                      {0.25, 0.25, 0.25, 0.25},
                                      {0.25, 0.25, 0.25, 0.25}});
    CHECK(accuracy(u) == doctest::Approx(0.25));
}

TEST_CASE("pairwise_auc examples and oracle agreement") {
    std::vector<double> a1{0.9, 0.8}, b1{0.1};
    CHECK(pairwise_auc(a1, b1) == doctest::Approx(1.0));

    std::vector<double> flat_a{0.5, 0.5}, flat_b{0.5, 0.5};
    CHECK(pairwise_auc(flat_a, flat_b, TiePolicy::half) == doctest::Approx(0.5));
    CHECK(pairwise_auc(flat_a, flat_b, TiePolicy::strict) == doctest::Approx(0.0));

    std::vector<double> a2{0.7, 0.2}, b2{0.5};
    CHECK(pairwise_auc(a2, b2) == doctest::Approx(0.5));

    Rng rng(1001);
    for (int trial = 0; trial < 200; ++trial) {
        size_t na = 1 + rng.next_below(12);
        size_t nb = 1 + rng.next_below(12);
        std::vector<double> a(na), b(nb);
        // Coarse grid so ties actually happen.
        for (auto& v : a) v = static_cast<double>(rng.next_below(6)) / 5.0;
        for (auto& v : b) v = static_cast<double>(rng.next_below(6)) / 5.0;
        for (TiePolicy p : {TiePolicy::half, TiePolicy::strict}) {
            CHECK(std::abs(pairwise_auc(a, b, p) - pairwise_auc_oracle(a, b, p)) <
                  1e-12);
        }
    }
}

TEST_CASE("multiclass_auc on block-diagonal and uniform matrices") {
    PredictionMatrix perfect = make_matrix(
        3, {0, 1, 2}, {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}});
    CHECK(multiclass_auc(perfect) == doctest::Approx(1.0));

    PredictionMatrix flat = make_matrix(3, {0, 1, 2},
                                        {{1.0 / 3, 1.0 / 3, 1.0 / 3},
                                         {1.0 / 3, 1.0 / 3, 1.0 / 3},
                                         {1.0 / 3, 1.0 / 3, 1.0 / 3}});
    CHECK(multiclass_auc(flat, TiePolicy::half) == doctest::Approx(0.5));
}

TEST_CASE("multiclass_auc equals the enumeration oracle") {
    Rng rng(2002);
    for (int trial = 0; trial < 30; ++trial) {
        PredictionMatrix m = random_matrix(rng, 5, 20, trial % 3 == 0 ? 0.0 : 0.7);
        for (TiePolicy p : {TiePolicy::half, TiePolicy::strict})
            CHECK(std::abs(multiclass_auc(m, p) - multiclass_auc_oracle(m, p)) < 1e-12);
    }
}

TEST_CASE("multiclass_auc skips unpopulated classes") {
    // Class 2 enrolled but never appears as a true label.
    PredictionMatrix m = make_matrix(3, {0, 1, 0, 1},
                                     {{0.7, 0.2, 0.1},
                                      {0.2, 0.7, 0.1},
                                      {0.6, 0.3, 0.1},
                                      {0.25, 0.7, 0.05}});
    size_t skipped = 0;
    double v = multiclass_auc(m, TiePolicy::half, &skipped);
    CHECK(skipped == 1);
    CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("n_class_accuracy closed form") {
    // One row in a 6-class problem with 2 classes beating the true class.
    std::vector<double> row{0.1, 0.3, 0.25, 0.2, 0.1, 0.05};
    PredictionMatrix m = make_matrix(6, {3}, {row});
    // N_error = 2 (classes 1 and 2 score above 0.2).
    CHECK(n_class_accuracy(m, 3) == doctest::Approx(4.0 / 20.0));
    // N = |C| collapses to plain accuracy.
    CHECK(n_class_accuracy(m, 6) == doctest::Approx(accuracy(m)));

    // A row with no errors scores 1 at every N.
    PredictionMatrix clean = make_matrix(4, {1}, {{0.1, 0.6, 0.2, 0.1}});
    for (size_t n = 1; n <= 4; ++n)
        CHECK(n_class_accuracy(clean, n) == doctest::Approx(1.0));
}

TEST_CASE("n_class_accuracy equals the paper-convention oracle") {
    Rng rng(3003);
    for (int trial = 0; trial < 12; ++trial) {
        size_t k = 4 + rng.next_below(5);  // 4..8 classes
        PredictionMatrix m = random_matrix(rng, k, 12, 0.4);
        for (size_t n = 2; n < k; ++n) {
            double formula = n_class_accuracy(m, n);
            double oracle = n_class_accuracy_oracle(m, n, SubsetConvention::paper);
            CHECK(std::abs(formula - oracle) < 1e-12);
        }
    }
}

TEST_CASE("the two subset conventions differ exactly as documented") {
    // |C| = 3, one row, N_error = 1: class 1 beats the true class 0; class 2
    // does not. Paper counts subset {0,2} only out of all three 2-subsets;
    // conditioned counts it out of the two subsets containing the true class.
    PredictionMatrix m = make_matrix(3, {0}, {{0.35, 0.5, 0.15}});
    CHECK(n_class_accuracy_oracle(m, 2, SubsetConvention::paper) ==
          doctest::Approx(1.0 / 3.0));
    CHECK(n_class_accuracy_oracle(m, 2, SubsetConvention::conditioned) ==
          doctest::Approx(0.5));
    // Conditioned at N = 1 is always 1.
    Rng rng(4004);
    PredictionMatrix r = random_matrix(rng, 5, 10, 0.0);
    CHECK(n_class_accuracy_oracle(r, 1, SubsetConvention::conditioned) ==
          doctest::Approx(1.0));
}

TEST_CASE("boundary identity holds even with score ties") {
    // True class ties with a lower-indexed class: argmax calls it wrong, and
    // the closed form must agree at N = |C|.
    PredictionMatrix tied = make_matrix(3, {1, 1, 2},
                                        {{0.4, 0.4, 0.2},
                                         {0.2, 0.5, 0.3},
                                         {0.3, 0.3, 0.4}});
    CHECK(accuracy(tied) == doctest::Approx(2.0 / 3.0));
    CHECK(n_class_accuracy(tied, 3) == accuracy(tied));

    Rng rng(5005);
    for (int trial = 0; trial < 20; ++trial) {
        PredictionMatrix m = random_matrix(rng, 6, 15, 0.3);
        // Quantize scores so ties are common, then renormalize.
        for (size_t r = 0; r < m.n_rows(); ++r) {
            double sum = 0.0;
            for (size_t c = 0; c < 6; ++c) {
                double q = std::floor(m.scores[r * 6 + c] * 4.0) / 4.0;
                m.scores[r * 6 + c] = q;
                sum += q;
            }
            if (sum == 0.0) {
                for (size_t c = 0; c < 6; ++c) m.scores[r * 6 + c] = 1.0 / 6.0;
            } else {
                for (size_t c = 0; c < 6; ++c) m.scores[r * 6 + c] /= sum;
            }
        }
        CHECK(n_class_accuracy(m, 6) == accuracy(m));
    }
}

TEST_CASE("n_class_accuracy is non-increasing in N") {
    Rng rng(6006);
    PredictionMatrix m = random_matrix(rng, 8, 25, 0.5);
    double prev = 2.0;
    for (size_t n = 1; n <= 8; ++n) {
        double v = n_class_accuracy(m, n);
        CHECK(v <= prev + 1e-12);
        prev = v;
    }
}

TEST_CASE("subset invariance of multiclass AUC") {
    // Mean over all size-k class subsets equals the full value.
    Rng rng(7007);
    PredictionMatrix m = random_matrix(rng, 6, 30, 0.6);
    double full = multiclass_auc(m, TiePolicy::half);
    for (size_t k = 2; k <= 5; ++k) {
        std::vector<char> pick(6, 0);
        std::fill(pick.end() - k, pick.end(), 1);
        double total = 0.0;
        size_t count = 0;
        do {
            // Restrict rows and columns to the subset without renormalizing.
            PredictionMatrix sub;
            std::vector<size_t> cls;
            for (size_t c = 0; c < 6; ++c)
                if (pick[c]) cls.push_back(c);
            for (size_t c : cls) sub.classes.push_back(m.classes[c]);
            for (size_t r = 0; r < m.n_rows(); ++r) {
                size_t t = static_cast<size_t>(m.rows[r].true_class);
                auto it = std::find(cls.begin(), cls.end(), t);
                if (it == cls.end()) continue;
                PredictionRow row = m.rows[r];
                row.true_class = static_cast<int>(it - cls.begin());
                sub.rows.push_back(row);
                for (size_t c : cls) sub.scores.push_back(m.at(r, c));
            }
            total += multiclass_auc(sub, TiePolicy::half);
            ++count;
        } while (std::next_permutation(pick.begin(), pick.end()));
        CHECK(std::abs(total / count - full) < 1e-12);
    }
}

TEST_CASE("spearman and its permutation test") {
    std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<double> up{2, 3, 5, 7, 8, 9, 12, 15};
    std::vector<double> down{15, 12, 9, 8, 7, 5, 3, 2};
    CHECK(spearman_rho(x, up) == doctest::Approx(1.0));
    CHECK(spearman_rho(x, down) == doctest::Approx(-1.0));

    // Strong negative trend: small p. Pure noise: large p (usually).
    double p_down = spearman_permutation_p_negative(x, down, 1000, 42);
    CHECK(p_down < 0.05);
    std::vector<double> noise{4, 9, 1, 7, 3, 8, 2, 6};
    double p_noise = spearman_permutation_p_negative(x, noise, 1000, 42);
    CHECK(p_noise > 0.05);

    // Deterministic given the seed.
    CHECK(spearman_permutation_p_negative(x, down, 500, 7) ==
          spearman_permutation_p_negative(x, down, 500, 7));
}

TEST_CASE("evaluation report serialization is stable") {
    Rng rng(8008);
    PredictionMatrix m = random_matrix(rng, 5, 12, 0.8);
    EvaluationReport rep = evaluate(m, "between", "cfg123", {1, 3, 5}, 99);
    CHECK(rep.n_classes == 5);
    CHECK(rep.n_sessions == 12);
    CHECK(rep.n_class_accuracy.count(3) == 1);
    std::string a = rep.to_json();
    std::string b = rep.to_json();
    CHECK(a == b);
    CHECK(a.find("\"design\": \"between\"") != std::string::npos);
    std::string row = rep.to_csv_row({1, 3, 5});
    CHECK(row.find("between,cfg123,") == 0);
    CHECK(EvaluationReport::csv_header({1, 3, 5})
              .find("acc_at_1,acc_at_3,acc_at_5") != std::string::npos);
}

TEST_CASE("degenerate metric inputs are rejected") {
    PredictionMatrix empty;
    empty.classes = {"A", "B"};
    CHECK_THROWS(accuracy(empty));
    PredictionMatrix one_class = make_matrix(2, {0, 0}, {{0.6, 0.4}, {0.7, 0.3}});
    CHECK_THROWS(multiclass_auc(one_class));
    PredictionMatrix ok = make_matrix(2, {0, 1}, {{0.6, 0.4}, {0.3, 0.7}});
    CHECK_THROWS(n_class_accuracy(ok, 0));
    CHECK_THROWS(n_class_accuracy(ok, 3));
    std::vector<double> empty_side;
    std::vector<double> side{1.0};
    CHECK_THROWS(pairwise_auc(empty_side, side));
}
