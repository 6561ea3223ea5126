#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "motionid/errors.hpp"
#include "motionid/experiments.hpp"
#include "motionid/synth.hpp"
#include "motionid/util.hpp"

using namespace motionid;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    size_t pos = 0;
    while (true) {
        size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(pos));
            break;
        }
        fields.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return fields;
}

double parse_double(const std::string& s, const std::string& context) {
    try {
        size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError(context + ": bad number '" + s + "'");
    }
}

int parse_int(const std::string& s, const std::string& context) {
    return static_cast<int>(parse_double(s, context));
}

// predictions.csv: four identity columns, then one score column per class.
PredictionMatrix read_predictions(const std::string& path) {
    std::string text = read_file(path);
    PredictionMatrix pred;
    size_t pos = 0;
    size_t line_no = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        std::string context = path + ":" + std::to_string(line_no);
        if (line_no == 1) {
            if (fields.size() < 6)
                throw DataError(path + ": header needs at least two class columns");
            for (size_t i = 4; i < fields.size(); ++i) pred.classes.push_back(fields[i]);
            continue;
        }
        if (fields.size() != pred.classes.size() + 4)
            throw DataError(context + ": wrong field count");
        PredictionRow row;
        row.participant = fields[0];
        row.dataset = parse_int(fields[1], context);
        row.week = parse_int(fields[2], context);
        row.section = fields[3];
        auto it = std::find(pred.classes.begin(), pred.classes.end(), row.participant);
        if (it == pred.classes.end())
            throw DataError(context + ": participant '" + row.participant +
                            "' is not a class column");
        row.true_class = static_cast<int>(it - pred.classes.begin());
        pred.rows.push_back(std::move(row));
        for (size_t i = 4; i < fields.size(); ++i)
            pred.scores.push_back(parse_double(fields[i], context));
    }
    pred.check_valid();
    return pred;
}

void write_predictions(const PredictionMatrix& pred, const std::string& path) {
    std::string out = "participant,dataset,week,section";
    for (const std::string& c : pred.classes) out += "," + c;
    out += "\n";
    for (size_t r = 0; r < pred.n_rows(); ++r) {
        const PredictionRow& row = pred.rows[r];
        out += row.participant + "," + std::to_string(row.dataset) + "," +
               std::to_string(row.week) + "," + row.section;
        for (size_t c = 0; c < pred.n_classes(); ++c) {
            out += ",";
            append_double(out, pred.at(r, c));
        }
        out += "\n";
    }
    write_file(path, out);
}

void cmd_synth(const CohortSpec& spec, const std::string& out) {
    std::vector<std::string> paths = write_cohort(spec, out);
    std::printf("wrote %zu sessions to %s\n", paths.size(), out.c_str());
}

void cmd_extract(const std::string& traces, const std::string& preset,
                 const std::string& out, const std::string& cache) {
    auto cohorts =
        load_cohort_features(traces, {preset_by_name(preset)}, FeatureParams{}, cache);
    const FeatureMatrix& matrix = cohorts[0].matrix;
    write_file(out, to_csv(matrix));
    std::printf("extracted %zu rows x %zu features (%s) from %zu sessions\n",
                matrix.n_rows(), matrix.n_cols(), preset.c_str(),
                cohorts[0].infos.size());
}

void cmd_train(const std::string& features, const std::string& out,
               const ForestParams& params_in, const std::string& profile,
               int trees_override, int draws_override) {
    FeatureMatrix matrix = from_csv(read_file(features), features);
    std::vector<std::string> classes;
    for (const RowMeta& m : matrix.rows) classes.push_back(m.participant);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    std::vector<size_t> rows(matrix.n_rows());
    std::vector<int32_t> labels(matrix.n_rows());
    for (size_t r = 0; r < matrix.n_rows(); ++r) {
        rows[r] = r;
        auto it =
            std::lower_bound(classes.begin(), classes.end(), matrix.rows[r].participant);
        labels[r] = static_cast<int32_t>(it - classes.begin());
    }

    ForestParams params = forest_profile(profile);
    if (trees_override > 0) params.trees_per_draw = trees_override;
    if (draws_override > 0) params.n_draws = draws_override;
    params.rows_per_draw = params_in.rows_per_draw;
    params.max_depth = params_in.max_depth;
    params.min_split = params_in.min_split;
    params.seed = params_in.seed;

    Forest forest = train_forest(matrix, rows, labels, classes, params);
    save_forest(forest, out);
    std::printf("trained %d trees on %zu rows, %zu classes -> %s\n",
                params.total_trees(), matrix.n_rows(), classes.size(), out.c_str());
}

void cmd_predict(const std::string& model, const std::string& features,
                 const std::string& out) {
    Forest forest = load_forest(model);
    FeatureMatrix matrix = from_csv(read_file(features), features);

    std::map<SessionKey, std::vector<size_t>> by_session;
    for (size_t r = 0; r < matrix.n_rows(); ++r) {
        const RowMeta& m = matrix.rows[r];
        by_session[SessionKey{m.participant, m.dataset, m.week, m.section}].push_back(r);
    }
    std::vector<TestUnit> units;
    for (const auto& [key, rows] : by_session) {
        auto it =
            std::lower_bound(forest.classes.begin(), forest.classes.end(), key.participant);
        if (it == forest.classes.end() || *it != key.participant)
            throw DataError("participant " + key.participant +
                            " is not among the model's classes");
        TestUnit unit;
        unit.id.participant = key.participant;
        unit.id.dataset = key.dataset;
        unit.id.week = key.week;
        unit.id.section = key.section;
        unit.id.true_class = static_cast<int>(it - forest.classes.begin());
        unit.rows = rows;
        units.push_back(std::move(unit));
    }

    PredictionMatrix pred = predict_units(forest, matrix, units);
    write_predictions(pred, out);
    std::printf("scored %zu sessions over %zu classes -> %s\n", pred.n_rows(),
                pred.n_classes(), out.c_str());
}

void cmd_eval(const std::string& predictions, const std::string& out,
              const std::string& design, const std::vector<size_t>& n_values,
              uint64_t seed) {
    std::string bytes = read_file(predictions);
    PredictionMatrix pred = read_predictions(predictions);
    EvaluationReport report = evaluate(pred, design, hex_u64(fnv1a(bytes)), n_values, seed);
    for (size_t n : n_values) {
        if (!report.n_class_accuracy.count(n))
            std::fprintf(stderr, "warning: acc@%zu skipped, only %zu classes\n", n,
                         report.n_classes);
    }
    if (out.empty())
        std::fputs(report.to_json().c_str(), stdout);
    else
        write_file(out, report.to_json());
    std::printf("%s: accuracy=%s multiclass_auc=%s over %zu sessions\n", design.c_str(),
                format_double(report.accuracy).c_str(),
                format_double(report.multiclass_auc).c_str(), report.n_sessions);
}

void cmd_exp(const std::string& design, const ExperimentConfig& config) {
    if (design == "identification") {
        IdentificationResult r = run_identification(config);
        std::printf("between: auc=%s accuracy=%s\n",
                    format_double(r.between.multiclass_auc).c_str(),
                    format_double(r.between.accuracy).c_str());
        std::printf("within: auc=%s accuracy=%s\n",
                    format_double(r.within.multiclass_auc).c_str(),
                    format_double(r.within.accuracy).c_str());
    } else if (design == "duration") {
        DurationResult r = run_duration(config);
        std::printf("duration: %zu between cells, %zu within cells -> %s\n",
                    r.between.size(), r.within.size(), config.out_dir.c_str());
    } else if (design == "delay") {
        DelayResult r = run_delay(config);
        std::printf("delay: %zu cells, spearman_rho=%s permutation_p=%s\n",
                    r.cells.size(), format_double(r.spearman_rho).c_str(),
                    format_double(r.permutation_p).c_str());
    } else {
        AblationResult r = run_ablation(config);
        for (const AblationRow& row : r.rows)
            std::printf("%s: %zu features, auc=%s\n", row.preset.c_str(), row.n_features,
                        format_double(row.report.multiclass_auc).c_str());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"VR motion re-identification toolkit"};
    app.require_subcommand(1);

    int jobs = 0;
    app.add_option("--jobs", jobs, "cap on worker threads (default: all cores)");
    auto apply_jobs = [&] {
#ifdef _OPENMP
        if (jobs > 0) omp_set_num_threads(jobs);
#endif
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic trace cohort");
    synth->fallthrough();
    CohortSpec spec;
    std::string synth_out;
    synth->add_option("--participants", spec.n_participants, "cohort size")
        ->capture_default_str();
    synth->add_option("--weeks", spec.weeks, "weeks of data")->capture_default_str();
    synth->add_option("--sessions-per-week", spec.sessions_per_week, "sessions per week")
        ->capture_default_str();
    synth->add_option("--minutes", spec.session_minutes, "session length, minutes")
        ->capture_default_str();
    synth->add_option("--hz", spec.hz, "frame rate")->capture_default_str();
    synth->add_option("--noise", spec.session_noise, "per-session behavior noise")
        ->capture_default_str();
    synth->add_option("--drift", spec.weekly_drift, "week-over-week profile drift")
        ->capture_default_str();
    synth->add_flag("--spawn,!--no-spawn", spec.spawn_randomization,
                    "random per-session spawn pose");
    synth->add_option("--seed", spec.seed, "cohort seed")->required();
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->callback([&] {
        apply_jobs();
        cmd_synth(spec, synth_out);
    });

    auto* extract = app.add_subcommand("extract", "Featurize traces into a CSV");
    extract->fallthrough();
    std::string ex_traces, ex_out, ex_cache;
    std::string ex_preset = "M6";
    extract->add_option("--traces", ex_traces, "trace file, directory, or glob")
        ->required();
    extract->add_option("--preset", ex_preset, "feature preset M1..M6")
        ->capture_default_str();
    extract->add_option("--out", ex_out, "output feature CSV")->required();
    extract->add_option("--cache", ex_cache, "feature cache directory");
    extract->callback([&] {
        apply_jobs();
        cmd_extract(ex_traces, ex_preset, ex_out, ex_cache);
    });

    auto* train = app.add_subcommand("train", "Train a forest on a feature CSV");
    train->fallthrough();
    std::string tr_features, tr_out;
    std::string tr_profile = "full";
    ForestParams tr_params;
    int tr_trees = 0;
    int tr_draws = 0;
    train->add_option("--features", tr_features, "feature CSV")->required();
    train->add_option("--out", tr_out, "model file")->required();
    train->add_option("--profile", tr_profile, "forest profile full|duration|delay")
        ->capture_default_str();
    train->add_option("--trees-per-draw", tr_trees, "trees per bootstrap draw");
    train->add_option("--draws", tr_draws, "bootstrap draws");
    train->add_option("--rows-per-draw", tr_params.rows_per_draw, "rows per draw")
        ->capture_default_str();
    train->add_option("--max-depth", tr_params.max_depth, "depth cap, 0 = unlimited")
        ->capture_default_str();
    train->add_option("--min-split", tr_params.min_split, "smallest splittable node")
        ->capture_default_str();
    train->add_option("--seed", tr_params.seed, "training seed")->required();
    train->callback([&] {
        apply_jobs();
        cmd_train(tr_features, tr_out, tr_params, tr_profile, tr_trees, tr_draws);
    });

    auto* predict = app.add_subcommand("predict", "Score feature rows with a model");
    predict->fallthrough();
    std::string pr_model, pr_features, pr_out;
    predict->add_option("--model", pr_model, "model file")->required();
    predict->add_option("--features", pr_features, "feature CSV")->required();
    predict->add_option("--out", pr_out, "output predictions CSV")->required();
    predict->callback([&] {
        apply_jobs();
        cmd_predict(pr_model, pr_features, pr_out);
    });

    auto* eval = app.add_subcommand("eval", "Evaluate a predictions CSV");
    eval->fallthrough();
    std::string ev_predictions, ev_out;
    std::string ev_design = "eval";
    std::vector<size_t> ev_n = {2, 3, 5, 10, 30};
    uint64_t ev_seed = 0;
    eval->add_option("--predictions", ev_predictions, "predictions CSV")->required();
    eval->add_option("--out", ev_out, "report JSON (default: stdout)");
    eval->add_option("--design", ev_design, "design label for the report")
        ->capture_default_str();
    eval->add_option("--n", ev_n, "N values for limited-candidate accuracy");
    eval->add_option("--seed", ev_seed, "seed recorded in the report");
    eval->callback([&] { cmd_eval(ev_predictions, ev_out, ev_design, ev_n, ev_seed); });

    auto* exp = app.add_subcommand("exp", "Run an experiment design end to end");
    exp->fallthrough();
    exp->require_subcommand(1);
    std::string x_config, x_traces, x_out, x_cache, x_preset, x_forest;
    uint64_t x_seed = 0;
    uint64_t x_rows = 0;
    int x_trees = 0, x_draws = 0, x_mc = 0;
    double x_frac = 0.0, x_buffer = 0.0, x_min = 0.0;
    auto* o_config = exp->add_option("--config", x_config, "JSON config file");
    auto* o_traces = exp->add_option("--traces", x_traces, "trace directory or glob");
    auto* o_out = exp->add_option("--out", x_out, "output directory");
    auto* o_cache = exp->add_option("--cache", x_cache, "feature cache directory");
    auto* o_preset = exp->add_option("--preset", x_preset, "feature preset");
    auto* o_forest = exp->add_option("--forest", x_forest, "forest profile override");
    auto* o_seed = exp->add_option("--seed", x_seed, "experiment seed");
    auto* o_trees = exp->add_option("--trees-per-draw", x_trees, "trees per draw");
    auto* o_draws = exp->add_option("--draws", x_draws, "bootstrap draws");
    auto* o_rows = exp->add_option("--rows-per-draw", x_rows, "rows per draw");
    auto* o_mc = exp->add_option("--monte-carlo", x_mc, "duration repetitions");
    auto* o_frac = exp->add_option("--train-fraction", x_frac, "within-split fraction");
    auto* o_buffer = exp->add_option("--buffer", x_buffer, "train/test buffer seconds");
    auto* o_min = exp->add_option("--min-session", x_min, "shortest usable session");
    for (const char* design : {"identification", "duration", "delay", "ablation"})
        exp->add_subcommand(design)->fallthrough();
    exp->callback([&] {
        apply_jobs();
        ExperimentConfig config;
        if (o_config->count()) config = ExperimentConfig::from_json_file(x_config);
        if (o_traces->count()) config.traces = x_traces;
        if (o_out->count()) config.out_dir = x_out;
        if (o_cache->count()) config.cache_dir = x_cache;
        if (o_preset->count()) config.preset = x_preset;
        if (o_forest->count()) config.forest = x_forest;
        if (o_seed->count()) {
            config.seed = x_seed;
            config.seed_set = true;
        }
        if (o_trees->count()) config.trees_per_draw = x_trees;
        if (o_draws->count()) config.n_draws = x_draws;
        if (o_rows->count()) config.rows_per_draw = x_rows;
        if (o_mc->count()) config.monte_carlo = x_mc;
        if (o_frac->count()) config.train_fraction = x_frac;
        if (o_buffer->count()) config.buffer_s = x_buffer;
        if (o_min->count()) config.min_session_s = x_min;
        cmd_exp(exp->get_subcommands().front()->get_name(), config);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const InternalError& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 4;
    }
    return 0;
}
