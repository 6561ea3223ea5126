#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "motionid/features.hpp"
#include "motionid/features_ref.hpp"
#include "motionid/forest.hpp"
#include "motionid/synth.hpp"

using namespace motionid;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

template <typename Fn>
double best_of(int reps, Fn&& fn) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        double t0 = now_s();
        fn();
        best = std::min(best, now_s() - t0);
    }
    return best;
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
    omp_set_num_threads(n);
#else
    (void)n;
#endif
}

double worst_abs_diff(const FeatureMatrix& a, const FeatureMatrix& b) {
    if (a.values.size() != b.values.size()) return 1e300;
    double worst = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i)
        worst = std::max(worst, std::fabs(a.values[i] - b.values[i]));
    return worst;
}

}  // namespace

int main() {
    std::printf("pipeline benchmark, %d thread(s) available\n\n", max_threads());

    CohortSpec spec;
    spec.n_participants = 6;
    spec.weeks = 1;
    spec.session_minutes = 3.0;
    spec.seed = 42;

    // Cohort generation: the per-session work is independent, so this is the
    // cleanest look at OpenMP scaling.
    set_threads(1);
    double synth_serial = best_of(2, [&] { generate_cohort(spec); });
    set_threads(max_threads());
    double synth_parallel = best_of(2, [&] { generate_cohort(spec); });
    std::printf("synth %zu sessions      serial %7.3fs  parallel %7.3fs  speedup %.2fx\n",
                static_cast<size_t>(spec.n_sessions()), synth_serial, synth_parallel,
                synth_serial / synth_parallel);

    std::vector<Session> sessions = generate_cohort(spec);
    const Session& session = sessions.front();

    // Featurization: the production path reuses sorted windows and shared
    // streams; the reference recomputes every window from scratch.
    const FeaturePreset& m6 = preset_by_name("M6");
    FeatureMatrix fast;
    double feat_fast = best_of(3, [&] { fast = featurize_session(session, m6); });
    FeatureMatrix slow;
    double feat_slow =
        best_of(1, [&] { slow = featurize_session_reference(session, m6); });
    std::printf("featurize M6 (1 session) fast   %7.3fs  reference %6.3fs  speedup %.2fx\n",
                feat_fast, feat_slow, feat_slow / feat_fast);
    double diff = worst_abs_diff(fast, slow);
    std::printf("  fast vs reference worst |diff| = %.3g over %zu values\n", diff,
                fast.values.size());
    if (diff > 1e-9) {
        std::printf("MISMATCH: optimized featurizer disagrees with the reference\n");
        return 1;
    }

    // Forest training and prediction scale over trees and test units.
    FeatureMatrix all = fast;
    std::vector<size_t> rows;
    std::vector<int32_t> labels;
    std::vector<std::string> classes;
    for (size_t p = 0; p < sessions.size(); ++p) {
        FeatureMatrix m = featurize_session(sessions[p], m6);
        if (p > 0) all.append_rows(m);
        classes.push_back(sessions[p].participant_id);
    }
    for (size_t r = 0; r < all.n_rows(); ++r) rows.push_back(r);
    labels.resize(all.n_rows());
    {
        size_t r = 0;
        for (size_t p = 0; p < sessions.size(); ++p) {
            size_t count = featurize_session(sessions[p], m6).n_rows();
            for (size_t i = 0; i < count; ++i) labels[r++] = static_cast<int32_t>(p);
        }
    }

    ForestParams params;
    params.trees_per_draw = 10;
    params.n_draws = 6;
    params.seed = 7;

    set_threads(1);
    Forest forest_serial;
    double train_serial = best_of(2, [&] {
        forest_serial = train_forest(all, rows, labels, classes, params);
    });
    set_threads(max_threads());
    Forest forest_parallel;
    double train_parallel = best_of(2, [&] {
        forest_parallel = train_forest(all, rows, labels, classes, params);
    });
    std::printf("train %d trees          serial %7.3fs  parallel %7.3fs  speedup %.2fx\n",
                params.total_trees(), train_serial, train_parallel,
                train_serial / train_parallel);

    std::vector<TestUnit> units;
    for (size_t p = 0; p < sessions.size(); ++p) {
        TestUnit u;
        u.id.participant = sessions[p].participant_id;
        u.id.true_class = static_cast<int>(p);
        units.push_back(u);
    }
    {
        size_t r = 0;
        for (size_t p = 0; p < sessions.size(); ++p) {
            size_t count = featurize_session(sessions[p], m6).n_rows();
            for (size_t i = 0; i < count; ++i) units[p].rows.push_back(r++);
        }
    }

    set_threads(1);
    PredictionMatrix pred_serial;
    double predict_serial =
        best_of(3, [&] { pred_serial = predict_units(forest_serial, all, units); });
    set_threads(max_threads());
    PredictionMatrix pred_parallel;
    double predict_parallel =
        best_of(3, [&] { pred_parallel = predict_units(forest_parallel, all, units); });
    std::printf("predict %zu units        serial %7.3fs  parallel %7.3fs  speedup %.2fx\n",
                units.size(), predict_serial, predict_parallel,
                predict_serial / predict_parallel);

    // Thread count must never change the result.
    bool same_scores = pred_serial.scores == pred_parallel.scores;
    std::printf("  serial vs parallel scores identical: %s\n",
                same_scores ? "yes" : "NO");
    if (!same_scores) return 1;

    return 0;
}
