#include "motionid/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <utility>

#include <nlohmann/json.hpp>

#include "motionid/errors.hpp"
#include "motionid/rng.hpp"
#include "motionid/util.hpp"

namespace motionid {

namespace {

using ordered_json = nlohmann::ordered_json;

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// Wall-clock per stage, kept out of the comparable outputs.
class Timings {
  public:
    void add(const std::string& stage, double seconds) {
        entries_.emplace_back(stage, seconds);
    }

    void write(const std::string& path) const {
        std::string out =
            "# wall-clock seconds per stage; not covered by the determinism "
            "guarantee\n";
        char buf[32];
        for (const auto& [stage, seconds] : entries_) {
            std::snprintf(buf, sizeof(buf), "%.3f", seconds);
            out += stage;
            out += '\t';
            out += buf;
            out += '\n';
        }
        write_file(path, out);
    }

  private:
    std::vector<std::pair<std::string, double>> entries_;
};

template <typename Container>
std::string join(const Container& values) {
    std::string out;
    for (const auto& v : values) {
        if (!out.empty()) out += ',';
        out += std::to_string(v);
    }
    return out;
}

std::string default_profile(const std::string& design) {
    if (design == "duration") return "duration";
    if (design == "delay") return "delay";
    return "full";
}

}  // namespace

ForestParams forest_profile(const std::string& name) {
    ForestParams p;
    if (name == "full") {
        p.trees_per_draw = 20;
        p.n_draws = 30;
    } else if (name == "duration") {
        p.trees_per_draw = 5;
        p.n_draws = 3;
    } else if (name == "delay") {
        p.trees_per_draw = 30;
        p.n_draws = 3;
    } else {
        throw ConfigError("unknown forest profile '" + name +
                          "' (expected full, duration, or delay)");
    }
    return p;
}

ForestParams ExperimentConfig::forest_params(const std::string& design) const {
    ForestParams p = forest_profile(forest.empty() ? default_profile(design) : forest);
    if (trees_per_draw > 0) p.trees_per_draw = trees_per_draw;
    if (n_draws > 0) p.n_draws = n_draws;
    p.rows_per_draw = rows_per_draw;
    return p;
}

void ExperimentConfig::validate(const std::string& design) const {
    if (traces.empty()) throw ConfigError("config: traces is required");
    if (!seed_set) throw ConfigError("config: seed is required");
    if (out_dir.empty()) throw ConfigError("config: out_dir is required");
    preset_by_name(preset);
    forest_params(design);
    if (trees_per_draw < 0 || n_draws < 0)
        throw ConfigError("config: forest overrides must be positive");
    if (rows_per_draw == 0) throw ConfigError("config: rows_per_draw must be at least 1");
    if (n_values.empty()) throw ConfigError("config: n_values must not be empty");
    for (size_t n : n_values)
        if (n < 1) throw ConfigError("config: n_values entries must be at least 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("config: train_fraction must be inside (0, 1)");
    if (buffer_s < 0.0) throw ConfigError("config: buffer_s must be >= 0");
    if (min_session_s <= 0.0) throw ConfigError("config: min_session_s must be > 0");
    if (design == "identification" || design == "ablation") {
        if (train_weeks.empty() || test_weeks.empty())
            throw ConfigError("config: train_weeks and test_weeks must not be empty");
    }
    if (design == "duration") {
        if (duration_sessions.empty() || duration_minutes.empty())
            throw ConfigError("config: duration grids must not be empty");
        for (int s : duration_sessions)
            if (s < 1) throw ConfigError("config: duration_sessions entries must be at least 1");
        for (int m : duration_minutes)
            if (m < 1) throw ConfigError("config: duration_minutes entries must be at least 1");
        if (monte_carlo < 1) throw ConfigError("config: monte_carlo must be at least 1");
    }
}

std::string ExperimentConfig::digest_text(const std::string& design,
                                          uint64_t cohort_digest) const {
    ForestParams p = forest_params(design);
    std::string out = "design=" + design;
    out += ";cohort=" + hex_u64(cohort_digest);
    out += ";preset=" + preset;
    out += ";train_weeks=" + join(train_weeks);
    out += ";test_weeks=" + join(test_weeks);
    out += ";n_values=" + join(n_values);
    if (design == "duration") {
        out += ";duration_sessions=" + join(duration_sessions);
        out += ";duration_minutes=" + join(duration_minutes);
        out += ";monte_carlo=" + std::to_string(monte_carlo);
    }
    out += ";forest=" + std::to_string(p.trees_per_draw) + "x" + std::to_string(p.n_draws);
    out += ";rows_per_draw=" + std::to_string(p.rows_per_draw);
    out += ";train_fraction=" + format_double(train_fraction);
    out += ";buffer_s=" + format_double(buffer_s);
    out += ";min_session_s=" + format_double(min_session_s);
    out += ";seed=" + std::to_string(seed);
    return out;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");

    ExperimentConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const auto& v = it.value();
        try {
            if (k == "traces") {
                c.traces = v.get<std::string>();
            } else if (k == "preset") {
                c.preset = v.get<std::string>();
            } else if (k == "train_weeks") {
                auto weeks = v.get<std::vector<int>>();
                c.train_weeks = std::set<int>(weeks.begin(), weeks.end());
            } else if (k == "test_weeks") {
                auto weeks = v.get<std::vector<int>>();
                c.test_weeks = std::set<int>(weeks.begin(), weeks.end());
            } else if (k == "n_values") {
                c.n_values = v.get<std::vector<size_t>>();
            } else if (k == "duration_sessions") {
                c.duration_sessions = v.get<std::vector<int>>();
            } else if (k == "duration_minutes") {
                c.duration_minutes = v.get<std::vector<int>>();
            } else if (k == "monte_carlo") {
                c.monte_carlo = v.get<int>();
            } else if (k == "forest") {
                c.forest = v.get<std::string>();
            } else if (k == "trees_per_draw") {
                c.trees_per_draw = v.get<int>();
            } else if (k == "n_draws") {
                c.n_draws = v.get<int>();
            } else if (k == "rows_per_draw") {
                c.rows_per_draw = v.get<uint64_t>();
            } else if (k == "train_fraction") {
                c.train_fraction = v.get<double>();
            } else if (k == "buffer_s") {
                c.buffer_s = v.get<double>();
            } else if (k == "min_session_s") {
                c.min_session_s = v.get<double>();
            } else if (k == "seed") {
                c.seed = v.get<uint64_t>();
                c.seed_set = true;
            } else if (k == "out_dir") {
                c.out_dir = v.get<std::string>();
            } else if (k == "cache_dir") {
                c.cache_dir = v.get<std::string>();
            } else {
                throw ConfigError(path + ": unknown config key '" + k + "'");
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(path + ": key '" + k + "': " + e.what());
        }
    }
    return c;
}

std::vector<std::string> resolve_traces(const std::string& pattern) {
    std::string glob = pattern;
    std::error_code ec;
    if (std::filesystem::is_directory(pattern, ec)) glob = pattern + "/*.jsonl";
    std::vector<std::string> paths = glob_paths(glob);
    if (paths.empty()) throw DataError("no trace files match '" + glob + "'");
    return paths;
}

std::vector<CohortFeatures> load_cohort_features(const std::string& traces,
                                                 const std::vector<FeaturePreset>& presets,
                                                 const FeatureParams& params,
                                                 const std::string& cache_dir) {
    if (presets.empty()) throw InternalError("load_cohort_features: no presets");
    std::vector<std::string> paths = resolve_traces(traces);
    if (!cache_dir.empty()) ensure_dir(cache_dir);

    struct Loaded {
        SessionInfo info;
        uint64_t digest = 0;
        std::vector<FeatureMatrix> mats;
    };
    std::vector<Loaded> loaded(paths.size());

    std::exception_ptr error;
    std::atomic<bool> failed{false};
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(paths.size()); ++i) {
        if (failed.load()) continue;
        try {
            Loaded& slot = loaded[i];
            std::string bytes = read_file(paths[i]);
            slot.digest = fnv1a(bytes);
            Session session = parse_trace(bytes, paths[i]);
            slot.info = session_info(session);
            bytes.clear();
            bytes.shrink_to_fit();

            slot.mats.resize(presets.size());
            std::vector<size_t> missing;
            for (size_t p = 0; p < presets.size(); ++p) {
                if (cache_dir.empty()) {
                    missing.push_back(p);
                    continue;
                }
                uint64_t key = feature_cache_key(slot.digest, presets[p], params);
                std::string cpath = cache_dir + "/" + hex_u64(key) + ".mifc";
                std::optional<FeatureMatrix> hit;
                try {
                    hit = read_feature_cache(cpath, key);
                } catch (const DataError&) {
                    // A damaged cache entry is a miss; the rewrite repairs it.
                }
                if (hit)
                    slot.mats[p] = std::move(*hit);
                else
                    missing.push_back(p);
            }
            if (!missing.empty()) {
                StreamSet streams = compute_streams(session, params);
                for (size_t p : missing) {
                    slot.mats[p] = featurize_streams(session, streams, presets[p], params);
                    if (!cache_dir.empty()) {
                        uint64_t key = feature_cache_key(slot.digest, presets[p], params);
                        write_feature_cache(slot.mats[p], key,
                                            cache_dir + "/" + hex_u64(key) + ".mifc");
                    }
                }
            }
        } catch (...) {
            failed.store(true);
#pragma omp critical(motionid_load_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    std::vector<size_t> order(loaded.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return loaded[a].info.key < loaded[b].info.key;
    });
    for (size_t i = 1; i < order.size(); ++i) {
        if (loaded[order[i - 1]].info.key == loaded[order[i]].info.key)
            throw DataError("duplicate session " + loaded[order[i]].info.key.to_string() +
                            " in trace set");
    }

    std::string digest_blob = "cohort-v1";
    for (size_t idx : order) digest_blob += hex_u64(loaded[idx].digest);
    uint64_t cohort_digest = fnv1a(digest_blob);

    std::vector<CohortFeatures> out(presets.size());
    for (size_t p = 0; p < presets.size(); ++p) {
        CohortFeatures& cf = out[p];
        cf.cohort_digest = cohort_digest;
        cf.matrix.columns = preset_columns(presets[p]);
        size_t total_rows = 0;
        for (size_t idx : order) total_rows += loaded[idx].mats[p].n_rows();
        cf.matrix.rows.reserve(total_rows);
        cf.matrix.values.reserve(total_rows * cf.matrix.columns.size());
        for (size_t idx : order) {
            FeatureMatrix& src = loaded[idx].mats[p];
            size_t begin = cf.matrix.n_rows();
            cf.matrix.append_rows(src);
            src = FeatureMatrix{};
            cf.infos.push_back(loaded[idx].info);
            cf.row_ranges.emplace_back(begin, cf.matrix.n_rows());
        }
    }
    return out;
}

DesignSlice slice_plan(const CohortFeatures& cohort, const SplitPlan& plan) {
    DesignSlice out;

    auto find_session = [&](const SessionKey& key) {
        auto it = std::lower_bound(
            cohort.infos.begin(), cohort.infos.end(), key,
            [](const SessionInfo& a, const SessionKey& b) { return a.key < b; });
        if (it == cohort.infos.end() || !(it->key == key))
            throw DataError("plan references session " + key.to_string() +
                            " absent from the trace set");
        return static_cast<size_t>(it - cohort.infos.begin());
    };
    auto rows_in = [&](size_t si, const std::vector<TimeSpan>& spans) {
        std::vector<size_t> rows;
        auto [begin, end] = cohort.row_ranges[si];
        for (size_t r = begin; r < end; ++r) {
            double t = cohort.matrix.rows[r].sample_time;
            for (const TimeSpan& span : spans) {
                if (span.contains(t)) {
                    rows.push_back(r);
                    break;
                }
            }
        }
        return rows;
    };

    std::map<std::string, std::vector<size_t>> train_by_class;
    for (const SessionAssignment& a : plan.sessions) {
        if (!a.is_train()) continue;
        std::vector<size_t> rows = rows_in(find_session(a.key), a.train_spans);
        if (rows.empty()) continue;
        auto& dst = train_by_class[a.key.participant];
        dst.insert(dst.end(), rows.begin(), rows.end());
    }
    out.classes.reserve(train_by_class.size());
    for (const auto& [participant, rows] : train_by_class) out.classes.push_back(participant);
    for (size_t c = 0; c < out.classes.size(); ++c) {
        for (size_t r : train_by_class[out.classes[c]]) {
            out.train_rows.push_back(r);
            out.train_labels.push_back(static_cast<int32_t>(c));
        }
    }

    for (const SessionAssignment& a : plan.sessions) {
        if (!a.is_test()) continue;
        size_t si = find_session(a.key);
        auto cls = std::lower_bound(out.classes.begin(), out.classes.end(), a.key.participant);
        if (cls == out.classes.end() || *cls != a.key.participant) {
            ++out.skipped_test_sessions;
            continue;
        }
        TestUnit unit;
        unit.id.participant = a.key.participant;
        unit.id.dataset = a.key.dataset;
        unit.id.week = a.key.week;
        unit.id.section = a.key.section;
        unit.id.true_class = static_cast<int>(cls - out.classes.begin());
        unit.rows = rows_in(si, a.test_spans);
        if (unit.rows.empty()) {
            ++out.skipped_test_sessions;
            continue;
        }
        out.units.push_back(std::move(unit));
    }
    return out;
}

namespace {

struct Prepared {
    std::vector<CohortFeatures> cohorts;
    std::string config_digest;
};

Prepared prepare(const ExperimentConfig& config, const std::string& design,
                 const std::vector<FeaturePreset>& presets, Timings& timings) {
    config.validate(design);
    ensure_dir(config.out_dir);
    std::string cache = config.cache_dir.empty() ? config.out_dir + "/cache" : config.cache_dir;
    double t0 = now_s();
    Prepared prep;
    prep.cohorts = load_cohort_features(config.traces, presets, FeatureParams{}, cache);
    timings.add("load_features", now_s() - t0);
    prep.config_digest =
        hex_u64(fnv1a(config.digest_text(design, prep.cohorts[0].cohort_digest)));
    return prep;
}

void write_manifest(const ExperimentConfig& config, const std::string& design,
                    const Prepared& prep, const std::vector<std::string>& preset_names) {
    ordered_json m;
    m["tool_version"] = kToolVersion;
    m["design"] = design;
    m["config_digest"] = prep.config_digest;
    m["cohort_digest"] = hex_u64(prep.cohorts[0].cohort_digest);
    m["seed"] = config.seed;
    m["presets"] = preset_names;
    m["n_sessions"] = prep.cohorts[0].infos.size();
    m["traces"] = config.traces;
    write_file(config.out_dir + "/manifest.json", m.dump(2) + "\n");
}

struct RunOutcome {
    EvaluationReport report;
    size_t skipped_test_sessions = 0;
};

RunOutcome run_plan(const CohortFeatures& cohort, const SplitPlan& plan,
                    const ForestParams& fp, const std::string& design_label,
                    const std::string& digest, const std::vector<size_t>& n_values,
                    uint64_t eval_seed) {
    DesignSlice slice = slice_plan(cohort, plan);
    if (slice.classes.size() < 2)
        throw DataError(design_label + ": found " + std::to_string(slice.classes.size()) +
                        " participants with training rows, need at least 2");
    if (slice.units.empty())
        throw DataError(design_label + ": no test sessions with feature rows");
    Forest forest = train_forest(cohort.matrix, slice.train_rows, slice.train_labels,
                                 slice.classes, fp);
    PredictionMatrix pred = predict_units(forest, cohort.matrix, slice.units);
    return {evaluate(pred, design_label, digest, n_values, eval_seed),
            slice.skipped_test_sessions};
}

void warn_skipped_n(const EvaluationReport& report, const std::vector<size_t>& n_values) {
    for (size_t n : n_values) {
        if (!report.n_class_accuracy.count(n))
            std::fprintf(stderr, "warning: %s: acc@%zu skipped, only %zu classes\n",
                         report.design.c_str(), n, report.n_classes);
    }
}

void warn_skipped_sessions(const std::string& design_label, size_t n) {
    if (n > 0)
        std::fprintf(stderr, "warning: %s: %zu test sessions had no feature rows\n",
                     design_label.c_str(), n);
}

// Turns an empty side of a plan into a data error before validate_plan would
// report it as an internal one; emptiness here comes from the traces.
void require_plan_coverage(const SplitPlan& plan, const std::string& design_label) {
    bool has_train = false;
    bool has_test = false;
    for (const SessionAssignment& a : plan.sessions) {
        has_train = has_train || a.is_train();
        has_test = has_test || a.is_test();
    }
    if (!has_train)
        throw DataError(design_label +
                        ": no usable training sessions in the trace set");
    if (!has_test)
        throw DataError(design_label + ": no usable test sessions in the trace set");
}

}  // namespace

IdentificationResult run_identification(const ExperimentConfig& config) {
    Timings timings;
    const std::string design = "identification";
    Prepared prep = prepare(config, design, {preset_by_name(config.preset)}, timings);
    const CohortFeatures& cohort = prep.cohorts[0];
    Rng root(config.seed);

    SplitPlan between = between_split(cohort.infos, config.train_weeks, config.test_weeks);
    require_plan_coverage(between, "between");
    validate_plan(between);
    SplitPlan within = within_split(cohort.infos, config.train_fraction, config.buffer_s,
                                    config.min_session_s);
    require_plan_coverage(within, "within");
    validate_plan(within, config.buffer_s);

    IdentificationResult result;
    ForestParams fp = config.forest_params(design);
    {
        double t0 = now_s();
        fp.seed = root.derive("between-forest").next_u64();
        RunOutcome r = run_plan(cohort, between, fp, "between", prep.config_digest,
                                config.n_values, config.seed);
        timings.add("between", now_s() - t0);
        result.between = r.report;
        result.skipped_between_sessions = r.skipped_test_sessions;
    }
    {
        double t0 = now_s();
        fp.seed = root.derive("within-forest").next_u64();
        RunOutcome r = run_plan(cohort, within, fp, "within", prep.config_digest,
                                config.n_values, config.seed);
        timings.add("within", now_s() - t0);
        result.within = r.report;
        result.skipped_within_sessions = r.skipped_test_sessions;
    }
    warn_skipped_sessions("between", result.skipped_between_sessions);
    warn_skipped_sessions("within", result.skipped_within_sessions);
    warn_skipped_n(result.between, config.n_values);
    warn_skipped_n(result.within, config.n_values);

    write_file(config.out_dir + "/between_plan.json", between.to_json());
    write_file(config.out_dir + "/within_plan.json", within.to_json());
    write_file(config.out_dir + "/between_report.json", result.between.to_json());
    write_file(config.out_dir + "/within_report.json", result.within.to_json());
    std::string csv = EvaluationReport::csv_header(config.n_values);
    csv += result.between.to_csv_row(config.n_values);
    csv += result.within.to_csv_row(config.n_values);
    write_file(config.out_dir + "/identification.csv", csv);
    write_manifest(config, design, prep, {config.preset});
    timings.write(config.out_dir + "/timings.log");
    return result;
}

DurationResult run_duration(const ExperimentConfig& config) {
    Timings timings;
    const std::string design = "duration";
    Prepared prep = prepare(config, design, {preset_by_name(config.preset)}, timings);
    const CohortFeatures& cohort = prep.cohorts[0];
    const ForestParams base_fp = config.forest_params(design);
    Rng root(config.seed);

    const auto& sess_grid = config.duration_sessions;
    const auto& min_grid = config.duration_minutes;
    const size_t mc = static_cast<size_t>(config.monte_carlo);
    const size_t n_cells = sess_grid.size() * min_grid.size();
    const size_t n_runs = n_cells * mc;

    struct RepResult {
        bool between_ok = false;
        bool within_ok = false;
        double between_auc = 0.0;
        double within_auc = 0.0;
    };
    std::vector<RepResult> reps(n_runs);

    double t0 = now_s();
    std::exception_ptr error;
    std::atomic<bool> failed{false};
#pragma omp parallel for schedule(dynamic)
    for (long run = 0; run < static_cast<long>(n_runs); ++run) {
        if (failed.load()) continue;
        try {
            size_t cell = static_cast<size_t>(run) / mc;
            int n_sessions = sess_grid[cell / min_grid.size()];
            int minutes = min_grid[cell % min_grid.size()];
            uint64_t plan_seed =
                root.derive("duration-plan", static_cast<uint64_t>(run)).next_u64();
            SplitPlan plan = duration_sample(cohort.infos, n_sessions, minutes, plan_seed);
            bool has_train = false;
            for (const SessionAssignment& a : plan.sessions)
                if (a.is_train()) has_train = true;
            if (!has_train) continue;
            validate_plan(plan);
            DesignSlice slice = slice_plan(cohort, plan);
            if (slice.classes.size() < 2 || slice.units.empty()) continue;

            // A test span inside a session that also trains is the within
            // panel; whole held-out sessions are the between panel.
            std::vector<TestUnit> between_units;
            std::vector<TestUnit> within_units;
            for (TestUnit& u : slice.units) {
                SessionKey key{u.id.participant, u.id.dataset, u.id.week, u.id.section};
                const SessionAssignment* a = plan.find(key);
                if (a && a->is_train())
                    within_units.push_back(std::move(u));
                else
                    between_units.push_back(std::move(u));
            }

            ForestParams fp = base_fp;
            fp.seed = root.derive("duration-forest", static_cast<uint64_t>(run)).next_u64();
            Forest forest = train_forest(cohort.matrix, slice.train_rows,
                                         slice.train_labels, slice.classes, fp);
            RepResult& rr = reps[run];
            if (!between_units.empty()) {
                PredictionMatrix pred = predict_units(forest, cohort.matrix, between_units);
                try {
                    rr.between_auc = multiclass_auc(pred);
                    rr.between_ok = true;
                } catch (const DataError&) {
                    // fewer than two populated classes in this draw
                }
            }
            if (!within_units.empty()) {
                PredictionMatrix pred = predict_units(forest, cohort.matrix, within_units);
                try {
                    rr.within_auc = multiclass_auc(pred);
                    rr.within_ok = true;
                } catch (const DataError&) {
                }
            }
        } catch (...) {
            failed.store(true);
#pragma omp critical(motionid_duration_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    timings.add("cells", now_s() - t0);

    auto aggregate = [&](bool within_panel) {
        std::vector<DurationCell> cells;
        for (size_t si = 0; si < sess_grid.size(); ++si) {
            for (size_t mi = 0; mi < min_grid.size(); ++mi) {
                size_t cell = si * min_grid.size() + mi;
                DurationCell out;
                out.n_sessions = sess_grid[si];
                out.minutes = min_grid[mi];
                std::vector<double> values;
                for (size_t r = 0; r < mc; ++r) {
                    const RepResult& rr = reps[cell * mc + r];
                    if (within_panel && rr.within_ok) values.push_back(rr.within_auc);
                    if (!within_panel && rr.between_ok) values.push_back(rr.between_auc);
                }
                out.reps = static_cast<int>(values.size());
                if (!values.empty()) {
                    double sum = std::accumulate(values.begin(), values.end(), 0.0);
                    out.mean_auc = sum / values.size();
                    double ss = 0.0;
                    for (double v : values) ss += (v - out.mean_auc) * (v - out.mean_auc);
                    out.sd_auc = values.size() > 1 ? std::sqrt(ss / (values.size() - 1)) : 0.0;
                }
                cells.push_back(out);
            }
        }
        return cells;
    };
    DurationResult result;
    result.between = aggregate(false);
    result.within = aggregate(true);

    auto to_csv = [](const std::vector<DurationCell>& cells) {
        std::string csv = "n_sessions,minutes,reps,mean_auc,sd_auc\n";
        for (const DurationCell& c : cells) {
            csv += std::to_string(c.n_sessions) + "," + std::to_string(c.minutes) + "," +
                   std::to_string(c.reps) + ",";
            if (c.reps > 0)
                csv += format_double(c.mean_auc) + "," + format_double(c.sd_auc);
            else
                csv += ",";
            csv += "\n";
        }
        return csv;
    };
    auto to_json_cells = [](const std::vector<DurationCell>& cells) {
        ordered_json arr = ordered_json::array();
        for (const DurationCell& c : cells) {
            ordered_json j;
            j["n_sessions"] = c.n_sessions;
            j["minutes"] = c.minutes;
            j["reps"] = c.reps;
            if (c.reps > 0) {
                j["mean_auc"] = c.mean_auc;
                j["sd_auc"] = c.sd_auc;
            } else {
                j["mean_auc"] = nullptr;
                j["sd_auc"] = nullptr;
            }
            arr.push_back(j);
        }
        return arr;
    };
    for (const DurationCell& c : result.between) {
        if (c.reps < config.monte_carlo)
            std::fprintf(stderr,
                         "warning: between cell %d sessions x %d min kept %d of %d reps\n",
                         c.n_sessions, c.minutes, c.reps, config.monte_carlo);
    }
    for (const DurationCell& c : result.within) {
        if (c.reps < config.monte_carlo)
            std::fprintf(stderr,
                         "warning: within cell %d sessions x %d min kept %d of %d reps\n",
                         c.n_sessions, c.minutes, c.reps, config.monte_carlo);
    }

    write_file(config.out_dir + "/duration_between.csv", to_csv(result.between));
    write_file(config.out_dir + "/duration_within.csv", to_csv(result.within));
    ordered_json j;
    j["tool_version"] = kToolVersion;
    j["design"] = design;
    j["config_digest"] = prep.config_digest;
    j["cohort_digest"] = hex_u64(cohort.cohort_digest);
    j["seed"] = config.seed;
    j["monte_carlo"] = config.monte_carlo;
    j["between"] = to_json_cells(result.between);
    j["within"] = to_json_cells(result.within);
    write_file(config.out_dir + "/duration.json", j.dump(2) + "\n");
    write_manifest(config, design, prep, {config.preset});
    timings.write(config.out_dir + "/timings.log");
    return result;
}

DelayResult run_delay(const ExperimentConfig& config) {
    Timings timings;
    const std::string design = "delay";
    Prepared prep = prepare(config, design, {preset_by_name(config.preset)}, timings);
    const CohortFeatures& cohort = prep.cohorts[0];
    const ForestParams base_fp = config.forest_params(design);
    Rng root(config.seed);

    std::vector<SplitPlan> plans = delay_pairs(cohort.infos);

    struct CellSlot {
        bool ok = false;
        DelayCell cell;
        std::string warning;
    };
    std::vector<CellSlot> slots(plans.size());

    double t0 = now_s();
    std::exception_ptr error;
    std::atomic<bool> failed{false};
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < static_cast<long>(plans.size()); ++i) {
        if (failed.load()) continue;
        const SplitPlan& plan = plans[i];
        CellSlot& slot = slots[i];
        int train_week = 0;
        int test_week = 0;
        for (const SessionAssignment& a : plan.sessions) {
            if (a.is_train()) train_week = a.key.week;
            if (a.is_test()) test_week = a.key.week;
        }
        try {
            validate_plan(plan);
            DesignSlice slice = slice_plan(cohort, plan);
            if (slice.classes.size() < 2 || slice.units.empty())
                throw DataError("too few usable sessions");
            ForestParams fp = base_fp;
            fp.seed = root.derive("delay-forest", static_cast<uint64_t>(i)).next_u64();
            Forest forest = train_forest(cohort.matrix, slice.train_rows,
                                         slice.train_labels, slice.classes, fp);
            PredictionMatrix pred = predict_units(forest, cohort.matrix, slice.units);
            slot.cell.train_week = train_week;
            slot.cell.test_week = test_week;
            slot.cell.auc = multiclass_auc(pred);
            slot.cell.n_test_sessions = slice.units.size();
            slot.ok = true;
        } catch (const DataError& e) {
            slot.warning = "warning: delay cell train week " + std::to_string(train_week) +
                           " test week " + std::to_string(test_week) +
                           " skipped: " + e.what();
        } catch (...) {
            failed.store(true);
#pragma omp critical(motionid_delay_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    timings.add("cells", now_s() - t0);

    DelayResult result;
    for (const CellSlot& slot : slots) {
        if (slot.ok) {
            result.cells.push_back(slot.cell);
        } else {
            ++result.n_skipped_cells;
            std::fprintf(stderr, "%s\n", slot.warning.c_str());
        }
    }
    if (result.cells.size() < 3)
        throw DataError("delay: only " + std::to_string(result.cells.size()) +
                        " cells computed, need at least 3 for the trend test");

    std::vector<double> gaps;
    std::vector<double> aucs;
    for (const DelayCell& c : result.cells) {
        gaps.push_back(std::abs(c.train_week - c.test_week));
        aucs.push_back(c.auc);
    }
    result.spearman_rho = spearman_rho(gaps, aucs);
    result.permutation_p = spearman_permutation_p_negative(
        gaps, aucs, result.n_permutations, root.derive("delay-permutation").next_u64());

    std::string csv = "train_week,test_week,gap,multiclass_auc,n_test_sessions\n";
    for (const DelayCell& c : result.cells) {
        csv += std::to_string(c.train_week) + "," + std::to_string(c.test_week) + "," +
               std::to_string(std::abs(c.train_week - c.test_week)) + "," +
               format_double(c.auc) + "," + std::to_string(c.n_test_sessions) + "\n";
    }
    write_file(config.out_dir + "/delay_matrix.csv", csv);

    ordered_json j;
    j["tool_version"] = kToolVersion;
    j["design"] = design;
    j["config_digest"] = prep.config_digest;
    j["cohort_digest"] = hex_u64(cohort.cohort_digest);
    j["seed"] = config.seed;
    ordered_json arr = ordered_json::array();
    for (const DelayCell& c : result.cells) {
        ordered_json cj;
        cj["train_week"] = c.train_week;
        cj["test_week"] = c.test_week;
        cj["gap"] = std::abs(c.train_week - c.test_week);
        cj["multiclass_auc"] = c.auc;
        cj["n_test_sessions"] = c.n_test_sessions;
        arr.push_back(cj);
    }
    j["cells"] = arr;
    j["n_skipped_cells"] = result.n_skipped_cells;
    j["spearman_rho"] = result.spearman_rho;
    j["permutation_p"] = result.permutation_p;
    j["n_permutations"] = result.n_permutations;
    write_file(config.out_dir + "/delay.json", j.dump(2) + "\n");
    write_manifest(config, design, prep, {config.preset});
    timings.write(config.out_dir + "/timings.log");
    return result;
}

AblationResult run_ablation(const ExperimentConfig& config) {
    Timings timings;
    const std::string design = "ablation";
    const std::vector<FeaturePreset>& presets = all_presets();
    Prepared prep = prepare(config, design, presets, timings);

    SplitPlan between = between_split(prep.cohorts[0].infos, config.train_weeks,
                                      config.test_weeks);
    require_plan_coverage(between, "between");
    validate_plan(between);

    ForestParams fp = config.forest_params(design);
    fp.seed = Rng(config.seed).derive("ablation-forest").next_u64();

    AblationResult result;
    for (size_t p = 0; p < presets.size(); ++p) {
        double t0 = now_s();
        RunOutcome r = run_plan(prep.cohorts[p], between, fp, "between",
                                prep.config_digest, config.n_values, config.seed);
        timings.add("preset " + presets[p].name, now_s() - t0);
        warn_skipped_sessions(presets[p].name, r.skipped_test_sessions);
        result.rows.push_back(
            {presets[p].name, prep.cohorts[p].matrix.n_cols(), r.report});
    }
    for (const AblationRow& row : result.rows) warn_skipped_n(row.report, config.n_values);

    std::string csv = "preset,n_features," + EvaluationReport::csv_header(config.n_values);
    for (const AblationRow& row : result.rows) {
        csv += row.preset + "," + std::to_string(row.n_features) + "," +
               row.report.to_csv_row(config.n_values);
    }
    write_file(config.out_dir + "/ablation.csv", csv);

    ordered_json j;
    j["tool_version"] = kToolVersion;
    j["design"] = design;
    j["config_digest"] = prep.config_digest;
    j["cohort_digest"] = hex_u64(prep.cohorts[0].cohort_digest);
    j["seed"] = config.seed;
    ordered_json arr = ordered_json::array();
    for (const AblationRow& row : result.rows) {
        ordered_json rj;
        rj["preset"] = row.preset;
        rj["n_features"] = row.n_features;
        rj["report"] = ordered_json::parse(row.report.to_json());
        arr.push_back(rj);
    }
    j["rows"] = arr;
    write_file(config.out_dir + "/ablation.json", j.dump(2) + "\n");

    write_file(config.out_dir + "/between_plan.json", between.to_json());
    std::vector<std::string> names;
    for (const auto& preset : presets) names.push_back(preset.name);
    write_manifest(config, design, prep, names);
    timings.write(config.out_dir + "/timings.log");
    return result;
}

}  // namespace motionid
