// Acceptance gate. Each criterion prints exactly one [PASS]/[FAIL] line on
// stdout; measurements ride along in parentheses and details go to stderr.
// Exit status is 0 only when every criterion passes.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "motionid/errors.hpp"
#include "motionid/experiments.hpp"
#include "motionid/features.hpp"
#include "motionid/geom.hpp"
#include "motionid/metrics.hpp"
#include "motionid/prediction.hpp"
#include "motionid/rng.hpp"
#include "motionid/synth.hpp"
#include "motionid/trace.hpp"

namespace fs = std::filesystem;
using namespace motionid;

namespace {

constexpr double kOracleTol = 1e-12;        // criteria 1 and 2
constexpr double kBscTol = 1e-9;            // criterion 4, M3-M6 drift bound
constexpr double kBscM1Min = 1e-3;          // criterion 4, M1 must move this much
constexpr double kGapPoints = 3.0;          // criterion 5, percentage points
constexpr double kDelayAlpha = 0.05;        // criterion 6
constexpr double kDurationTiePoints = 0.5;  // criterion 7
constexpr double kOracleBudgetS = 10.0;     // criterion 1
constexpr double kIdentBudgetS = 900.0;     // criterion 5

std::string g_work;

struct CriterionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& detail) {
    if (!ok) throw CriterionFailure(detail);
}

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt(const char* pattern, ...) {
    va_list args;
    va_start(args, pattern);
    char buf[512];
    std::vsnprintf(buf, sizeof buf, pattern, args);
    va_end(args);
    return buf;
}

// ---- criteria 1-3: seeded prediction matrices and local oracles ----------

// Half the matrices draw integer-grid scores (20 balls over 6 columns) so
// ties are everywhere; the other half draw smooth scores with a few rows
// duplicated outright.
PredictionMatrix make_matrix(int index) {
    Rng rng(140000 + index);
    size_t n_classes = 6;
    size_t n_rows = 30 + rng.next_below(61);
    PredictionMatrix m;
    m.classes.resize(n_classes);
    for (size_t c = 0; c < n_classes; ++c) m.classes[c] = "c" + std::to_string(c);
    m.rows.resize(n_rows);
    m.scores.assign(n_rows * n_classes, 0.0);
    for (size_t r = 0; r < n_rows; ++r) {
        m.rows[r].participant = "u" + std::to_string(r);
        m.rows[r].true_class =
            r < n_classes ? static_cast<int>(r) : static_cast<int>(rng.next_below(n_classes));
        double* row = &m.scores[r * n_classes];
        if (index % 2 == 0) {
            for (int ball = 0; ball < 20; ++ball) row[rng.next_below(n_classes)] += 0.05;
        } else if (r > 8 && rng.next_below(4) == 0) {
            const double* prev = &m.scores[(r - 1 - rng.next_below(4)) * n_classes];
            std::copy(prev, prev + n_classes, row);
        } else {
            double sum = 0.0;
            for (size_t c = 0; c < n_classes; ++c) {
                row[c] = 0.05 + rng.next_double();
                sum += row[c];
            }
            for (size_t c = 0; c < n_classes; ++c) row[c] /= sum;
        }
    }
    return m;
}

const std::vector<PredictionMatrix>& oracle_matrices() {
    static std::vector<PredictionMatrix> all = [] {
        std::vector<PredictionMatrix> v;
        for (int i = 0; i < 50; ++i) v.push_back(make_matrix(i));
        return v;
    }();
    return all;
}

// Argmax convention: c displaces the true class a on a higher score, or on an
// equal score at a lower index.
bool displaces(const PredictionMatrix& m, size_t r, size_t c, size_t a) {
    double sc = m.at(r, c);
    double sa = m.at(r, a);
    return sc > sa || (sc == sa && c < a);
}

// Literal double loop over ordered class pairs, written here so the gate does
// not lean on any library code path.
double enumerated_multiclass_auc(const PredictionMatrix& m) {
    std::vector<size_t> populated;
    std::vector<size_t> count(m.n_classes(), 0);
    for (const auto& row : m.rows) ++count[row.true_class];
    for (size_t c = 0; c < m.n_classes(); ++c)
        if (count[c] > 0) populated.push_back(c);
    require(populated.size() >= 2, "oracle matrix with fewer than 2 populated classes");

    double total = 0.0;
    size_t n_pairs = 0;
    for (size_t a : populated) {
        for (size_t b : populated) {
            if (a == b) continue;
            double wins = 0.0;
            size_t n = 0;
            for (size_t ra = 0; ra < m.n_rows(); ++ra) {
                if (static_cast<size_t>(m.rows[ra].true_class) != a) continue;
                for (size_t rb = 0; rb < m.n_rows(); ++rb) {
                    if (static_cast<size_t>(m.rows[rb].true_class) != b) continue;
                    double sa = m.at(ra, a);
                    double sb = m.at(rb, a);
                    if (sa > sb) wins += 1.0;
                    else if (sa == sb) wins += 0.5;
                    ++n;
                }
            }
            total += wins / static_cast<double>(n);
            ++n_pairs;
        }
    }
    return total / static_cast<double>(n_pairs);
}

// Paper-convention subset enumeration: a size-N subset succeeds when it
// avoids every class that would displace the row's true class.
double enumerated_n_class_accuracy(const PredictionMatrix& m, size_t n) {
    size_t k = m.n_classes();
    double total = 0.0;
    for (size_t r = 0; r < m.n_rows(); ++r) {
        size_t a = static_cast<size_t>(m.rows[r].true_class);
        size_t good = 0, subsets = 0;
        for (uint32_t mask = 0; mask < (1u << k); ++mask) {
            if (static_cast<size_t>(std::popcount(mask)) != n) continue;
            ++subsets;
            bool clean = true;
            for (size_t c = 0; c < k; ++c) {
                if ((mask >> c) & 1u) {
                    if (c != a && displaces(m, r, c, a)) clean = false;
                }
            }
            if (clean) ++good;
        }
        total += static_cast<double>(good) / static_cast<double>(subsets);
    }
    return total / static_cast<double>(m.n_rows());
}

std::string criterion_1() {
    double t0 = now_s();
    double worst_auc = 0.0;
    double worst_ncls = 0.0;
    for (const PredictionMatrix& m : oracle_matrices()) {
        double fast = multiclass_auc(m);
        double slow = enumerated_multiclass_auc(m);
        worst_auc = std::max(worst_auc, std::abs(fast - slow));
        for (size_t n = 2; n <= 5; ++n) {
            double closed = n_class_accuracy(m, n);
            double enumerated = enumerated_n_class_accuracy(m, n);
            worst_ncls = std::max(worst_ncls, std::abs(closed - enumerated));
        }
    }
    double elapsed = now_s() - t0;
    require(worst_auc <= kOracleTol,
            fmt("multiclass_auc deviates from enumeration by %.3e", worst_auc));
    require(worst_ncls <= kOracleTol,
            fmt("n_class_accuracy deviates from enumeration by %.3e", worst_ncls));
    require(elapsed < kOracleBudgetS, fmt("oracle sweep took %.1fs", elapsed));
    return fmt("max dev auc %.1e, ncls %.1e, %.1fs", worst_auc, worst_ncls, elapsed);
}

PredictionMatrix restrict_to(const PredictionMatrix& m, const std::vector<size_t>& subset) {
    PredictionMatrix out;
    for (size_t c : subset) out.classes.push_back(m.classes[c]);
    for (size_t r = 0; r < m.n_rows(); ++r) {
        size_t a = static_cast<size_t>(m.rows[r].true_class);
        auto it = std::find(subset.begin(), subset.end(), a);
        if (it == subset.end()) continue;
        PredictionRow row = m.rows[r];
        row.true_class = static_cast<int>(it - subset.begin());
        out.rows.push_back(row);
        for (size_t c : subset) out.scores.push_back(m.at(r, c));
    }
    return out;
}

std::string criterion_2() {
    double worst = 0.0;
    for (const PredictionMatrix& m : oracle_matrices()) {
        double full = multiclass_auc(m);
        for (size_t k = 2; k <= 5; ++k) {
            double sum = 0.0;
            size_t n_subsets = 0;
            for (uint32_t mask = 0; mask < (1u << m.n_classes()); ++mask) {
                if (static_cast<size_t>(std::popcount(mask)) != k) continue;
                std::vector<size_t> subset;
                for (size_t c = 0; c < m.n_classes(); ++c)
                    if ((mask >> c) & 1u) subset.push_back(c);
                sum += multiclass_auc(restrict_to(m, subset));
                ++n_subsets;
            }
            worst = std::max(worst, std::abs(sum / n_subsets - full));
        }
    }
    require(worst <= kOracleTol, fmt("subset mean deviates from full AUC by %.3e", worst));
    return fmt("max dev %.1e over k=2..5", worst);
}

std::string criterion_3() {
    for (const PredictionMatrix& m : oracle_matrices()) {
        double full = n_class_accuracy(m, m.n_classes());
        double acc = accuracy(m);
        require(full == acc, fmt("N=|C| accuracy %.17g != accuracy %.17g", full, acc));
    }
    return "exact equality on all 50 matrices";
}

// ---- criterion 4: body-space invariance under a rigid world move ---------

Session transformed_copy(const Session& session, double yaw_deg, const Vec3& shift) {
    Mat3 rot = rotation_y(yaw_deg);
    auto move = [&](const Pose& p) {
        Pose out;
        out.position = rot * p.position + shift;
        out.rotation = {wrap_degrees(p.rotation.yaw + yaw_deg), p.rotation.pitch,
                        p.rotation.roll};
        return out;
    };
    Session out = session;
    for (MotionFrame& f : out.frames) {
        f.head = move(f.head);
        f.left = move(f.left);
        f.right = move(f.right);
        if (f.root) f.root = move(*f.root);
    }
    return out;
}

std::string criterion_4() {
    CohortSpec spec;
    spec.n_participants = 5;
    spec.weeks = 4;
    spec.session_minutes = 1.5;
    spec.seed = 77;

    double worst_bsc = 0.0;
    double smallest_m1 = 1e300;
    FeatureParams params;
    for (int p = 0; p < spec.n_participants; ++p) {
        for (int w = 1; w <= spec.weeks; ++w) {
            Session original = generate_session(spec, p, w, 1);
            Session moved = transformed_copy(original, 137.0, {3.2, 0.0, -1.7});
            double m1_shift = 0.0;
            for (const char* name : {"M1", "M3", "M4", "M5", "M6"}) {
                const FeaturePreset& preset = preset_by_name(name);
                FeatureMatrix a = featurize_session(original, preset, params);
                FeatureMatrix b = featurize_session(moved, preset, params);
                require(a.values.size() == b.values.size(),
                        "transformed session changed the feature shape");
                double diff = 0.0;
                for (size_t i = 0; i < a.values.size(); ++i)
                    diff = std::max(diff, std::abs(a.values[i] - b.values[i]));
                if (std::string(name) == "M1") m1_shift = diff;
                else worst_bsc = std::max(worst_bsc, diff);
            }
            smallest_m1 = std::min(smallest_m1, m1_shift);
        }
    }
    require(worst_bsc <= kBscTol,
            fmt("body-space feature moved by %.3e under the rigid transform", worst_bsc));
    require(smallest_m1 > kBscM1Min,
            fmt("a session's M1 features moved only %.3e", smallest_m1));
    return fmt("M3-M6 max %.1e, M1 min shift %.2e, 20 sessions", worst_bsc, smallest_m1);
}

// ---- criteria 5-9: experiment designs on synthetic cohorts ---------------

std::string default_cohort_dir() {
    std::string dir = g_work + "/cohort_default";
    if (!fs::exists(dir + "/p29_w8_s1.jsonl")) {
        CohortSpec spec;
        spec.seed = 1;
        write_cohort(spec, dir);
    }
    return dir;
}

ExperimentConfig default_config(const std::string& out_name) {
    ExperimentConfig cfg;
    cfg.traces = default_cohort_dir();
    cfg.seed = 1;
    cfg.seed_set = true;
    cfg.out_dir = g_work + "/" + out_name;
    cfg.cache_dir = g_work + "/cache_default";
    return cfg;
}

double g_c5_gap_points = 0.0;

std::string criterion_5() {
    fs::remove_all(g_work + "/cohort_default");
    fs::remove_all(g_work + "/cache_default");
    fs::remove_all(g_work + "/c5_identification");
    double t0 = now_s();
    ExperimentConfig cfg = default_config("c5_identification");
    IdentificationResult r = run_identification(cfg);
    double elapsed = now_s() - t0;
    double gap = 100.0 * (r.within.multiclass_auc - r.between.multiclass_auc);
    g_c5_gap_points = gap;
    require(gap >= kGapPoints,
            fmt("within %.4f vs between %.4f: gap %.2f points", r.within.multiclass_auc,
                r.between.multiclass_auc, gap));
    require(elapsed < kIdentBudgetS, fmt("cold run took %.0fs", elapsed));
    return fmt("within %.4f, between %.4f, gap %.2f pts, %.0fs cold", r.within.multiclass_auc,
               r.between.multiclass_auc, gap, elapsed);
}

std::string criterion_6() {
    std::vector<double> gaps, aucs;
    for (uint64_t seed : {1, 2, 3}) {
        CohortSpec spec;
        spec.n_participants = 12;
        spec.session_minutes = 5.0;
        spec.seed = 40 + seed;
        std::string dir = g_work + "/cohort_delay_" + std::to_string(seed);
        if (!fs::exists(dir)) write_cohort(spec, dir);

        ExperimentConfig cfg;
        cfg.traces = dir;
        cfg.seed = seed;
        cfg.seed_set = true;
        cfg.out_dir = g_work + "/c6_delay_" + std::to_string(seed);
        cfg.cache_dir = g_work + "/cache_delay_" + std::to_string(seed);
        DelayResult r = run_delay(cfg);
        for (const DelayCell& cell : r.cells) {
            gaps.push_back(std::abs(cell.test_week - cell.train_week));
            aucs.push_back(cell.auc);
        }
    }
    require(!gaps.empty(), "delay designs produced no cells");
    double rho = spearman_rho(gaps, aucs);
    double p = spearman_permutation_p_negative(gaps, aucs, 1000, 7);
    require(rho < 0.0, fmt("pooled Spearman rho %.3f is not negative", rho));
    require(p < kDelayAlpha, fmt("permutation p %.4f above %.2f", p, kDelayAlpha));
    return fmt("rho %.3f, p %.4f, %zu cells over 3 seeds", rho, p, gaps.size());
}

std::string criterion_7() {
    const std::vector<int> counts = {2, 4};
    const std::vector<int> minutes = {1, 3, 5};
    std::map<std::pair<int, int>, std::vector<double>> between, within;
    for (uint64_t seed : {1, 2, 3}) {
        CohortSpec spec;
        spec.n_participants = 10;
        spec.seed = 60 + seed;
        std::string dir = g_work + "/cohort_duration_" + std::to_string(seed);
        if (!fs::exists(dir)) write_cohort(spec, dir);

        ExperimentConfig cfg;
        cfg.traces = dir;
        cfg.duration_sessions = counts;
        cfg.duration_minutes = minutes;
        cfg.seed = seed;
        cfg.seed_set = true;
        cfg.out_dir = g_work + "/c7_duration_" + std::to_string(seed);
        cfg.cache_dir = g_work + "/cache_duration_" + std::to_string(seed);
        DurationResult r = run_duration(cfg);
        for (const DurationCell& cell : r.between) {
            require(cell.reps > 0, fmt("between cell (%d sessions, %d min) had no usable reps",
                                       cell.n_sessions, cell.minutes));
            between[{cell.n_sessions, cell.minutes}].push_back(cell.mean_auc);
        }
        for (const DurationCell& cell : r.within) {
            require(cell.reps > 0, fmt("within cell (%d sessions, %d min) had no usable reps",
                                       cell.n_sessions, cell.minutes));
            within[{cell.n_sessions, cell.minutes}].push_back(cell.mean_auc);
        }
    }
    auto mean_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };

    std::string detail;
    for (int m : minutes) {
        double at2 = mean_of(between[{2, m}]);
        double at4 = mean_of(between[{4, m}]);
        require(at4 > at2, fmt("between at %d min: 4 sessions %.4f <= 2 sessions %.4f", m,
                               at4, at2));
        detail += fmt("%s%dmin %.3f>%.3f", detail.empty() ? "" : ", ", m, at4, at2);
    }
    for (int n : counts) {
        for (size_t i = 1; i < minutes.size(); ++i) {
            double prev = mean_of(within[{n, minutes[i - 1]}]);
            double next = mean_of(within[{n, minutes[i]}]);
            require(next >= prev - kDurationTiePoints / 100.0,
                    fmt("within at %d sessions drops %.4f -> %.4f from %d to %d min", n, prev,
                        next, minutes[i - 1], minutes[i]));
        }
    }
    return "between 4>2 at every duration (" + detail + "), within non-decreasing";
}

std::string criterion_8() {
    ExperimentConfig cfg = default_config("c8_ablation");
    AblationResult r = run_ablation(cfg);
    std::map<std::string, double> auc;
    for (const AblationRow& row : r.rows) auc[row.preset] = row.report.multiclass_auc;
    require(auc.count("M1") && auc.count("M2") && auc.count("M5"),
            "ablation output missing a preset");
    require(auc["M5"] > auc["M2"], fmt("M5 %.4f <= M2 %.4f", auc["M5"], auc["M2"]));
    require(auc["M2"] > auc["M1"], fmt("M2 %.4f <= M1 %.4f", auc["M2"], auc["M1"]));
    return fmt("M5 %.4f > M2 %.4f > M1 %.4f", auc["M5"], auc["M2"], auc["M1"]);
}

std::map<std::string, std::string> output_bytes(const std::string& dir) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string rel = fs::relative(entry.path(), dir).string();
        if (rel == "timings.log") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::stringstream body;
        body << in.rdbuf();
        files[rel] = body.str();
    }
    return files;
}

std::string criterion_9() {
    CohortSpec spec;
    spec.n_participants = 4;
    spec.session_minutes = 2.0;
    spec.seed = 5;
    std::string dir = g_work + "/cohort_tiny";
    if (!fs::exists(dir)) write_cohort(spec, dir);

    size_t n_files = 0;
    for (const std::string& design : {"identification", "duration", "delay", "ablation"}) {
        std::map<std::string, std::string> first;
        for (int run = 0; run < 2; ++run) {
            ExperimentConfig cfg;
            cfg.traces = dir;
            cfg.preset = "M3";
            cfg.trees_per_draw = 2;
            cfg.n_draws = 2;
            cfg.monte_carlo = 2;
            cfg.duration_sessions = {1, 2};
            cfg.duration_minutes = {1};
            cfg.n_values = {2, 3};
            cfg.min_session_s = 60.0;
            cfg.seed = 17;
            cfg.seed_set = true;
            cfg.out_dir = g_work + "/c9_" + design + (run == 0 ? "_a" : "_b");
            cfg.cache_dir = g_work + "/cache_tiny";
            fs::remove_all(cfg.out_dir);
            if (design == "identification") run_identification(cfg);
            else if (design == "duration") run_duration(cfg);
            else if (design == "delay") run_delay(cfg);
            else run_ablation(cfg);

            std::map<std::string, std::string> bytes = output_bytes(cfg.out_dir);
            if (run == 0) {
                first = std::move(bytes);
                n_files += first.size();
                continue;
            }
            require(bytes.size() == first.size(),
                    design + ": rerun produced a different file set");
            for (const auto& [rel, body] : bytes) {
                auto it = first.find(rel);
                require(it != first.end(), design + ": rerun added " + rel);
                require(it->second == body, design + ": " + rel + " differs between reruns");
            }
        }
    }
    return fmt("4 designs, %zu files byte-identical across reruns", n_files);
}

std::string criterion_10() {
    const std::vector<std::pair<std::string, size_t>> expected = {
        {"M1", 90}, {"M2", 60}, {"M3", 45}, {"M4", 180}, {"M5", 360}, {"M6", 840},
    };
    std::string detail;
    for (const auto& [name, want] : expected) {
        size_t got = preset_columns(preset_by_name(name)).size();
        require(got == want, fmt("%s has %zu columns, expected %zu", name.c_str(), got, want));
        detail += fmt("%s%s=%zu", detail.empty() ? "" : " ", name.c_str(), got);
    }
    return detail;
}

}  // namespace

int main(int argc, char** argv) {
    g_work = "acceptance_work";
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--work-dir" && i + 1 < argc) {
            g_work = argv[++i];
        } else {
            std::fprintf(stderr, "usage: %s [--work-dir <dir>]\n", argv[0]);
            return 2;
        }
    }
    fs::create_directories(g_work);

    struct Criterion {
        const char* label;
        std::string (*run)();
    };
    const Criterion criteria[] = {
        {"metric oracles match exhaustive enumeration", criterion_1},
        {"multiclass AUC is subset-invariant", criterion_2},
        {"n_class_accuracy at N=|C| equals accuracy", criterion_3},
        {"body-space features ignore rigid world moves", criterion_4},
        {"within exceeds between by >= 3 points in budget", criterion_5},
        {"delay AUC decays with week gap", criterion_6},
        {"duration grid trends hold", criterion_7},
        {"ablation orders M5 > M2 > M1", criterion_8},
        {"experiment outputs are byte-reproducible", criterion_9},
        {"feature preset column counts are exact", criterion_10},
    };

    int failures = 0;
    for (size_t i = 0; i < std::size(criteria); ++i) {
        try {
            std::string detail = criteria[i].run();
            std::printf("[PASS] %2zu %s (%s)\n", i + 1, criteria[i].label, detail.c_str());
        } catch (const std::exception& e) {
            ++failures;
            std::printf("[FAIL] %2zu %s\n", i + 1, criteria[i].label);
            std::fprintf(stderr, "criterion %zu: %s\n", i + 1, e.what());
        }
        std::fflush(stdout);
    }
    if (failures > 0) std::fprintf(stderr, "%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
