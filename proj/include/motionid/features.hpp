#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "motionid/trace.hpp"

// Per-frame streams and windowed summary statistics. A feature is one
// (stream, window, statistic) triple evaluated at sample instants spaced 1 s
// apart; presets M1..M6 select which triples exist.

namespace motionid {

struct FeatureParams {
    double bsc_half_window_s = 3.0;
    double max_gap_s = 0.5;

    std::string cache_key_text() const;
};

// All per-frame scalar streams. values[s][f] is stream s at frame f; streams
// derived from one-frame differences have no value at frame 0, which
// first_valid records.
struct StreamSet {
    std::vector<std::string> names;
    std::vector<std::vector<double>> values;
    std::vector<int> first_valid;

    int index_of(const std::string& name) const;
};

// The 42 full-set stream names plus the 9 global-position legacy streams that
// only preset M1 uses (px, pz, yaw per tracked object).
const std::vector<std::string>& all_stream_names();

struct FeaturePreset {
    std::string name;
    std::vector<std::string> streams;
    std::vector<double> windows_s;

    size_t feature_count() const { return streams.size() * windows_s.size() * 5; }
    double largest_window() const;
};

const std::vector<FeaturePreset>& all_presets();
const FeaturePreset& preset_by_name(const std::string& name);

enum class Stat { mean, median, max, min, sd };
constexpr int kStatCount = 5;
const char* stat_name(Stat s);

// One summary statistic over a window of values. Median of an even count is
// the mean of the two central values; sd uses the n-1 denominator and is 0
// for a single value.
double summarize(std::span<const double> window_values, Stat stat);

struct RowMeta {
    std::string participant;
    int dataset = 1;
    int week = 1;
    std::string section;
    double sample_time = 0.0;
};

struct FeatureMatrix {
    std::vector<std::string> columns;
    std::vector<RowMeta> rows;
    std::vector<double> values;  // rows.size() x columns.size(), row major

    size_t n_rows() const { return rows.size(); }
    size_t n_cols() const { return columns.size(); }
    double at(size_t r, size_t c) const { return values[r * columns.size() + c]; }
    std::span<const double> row(size_t r) const {
        return {values.data() + r * columns.size(), columns.size()};
    }

    // Digest of the column schema; forests refuse rows from a different one.
    uint64_t column_digest() const;

    // Appends rows from a matrix with the identical column schema.
    void append_rows(const FeatureMatrix& other);
};

// Column names for a preset, in deterministic order: streams in preset order,
// windows ascending, statistics in declaration order.
std::vector<std::string> preset_columns(const FeaturePreset& preset);

StreamSet compute_streams(const Session& session, const FeatureParams& params = {});

// Featurization of one session. Sample instants sit on integer seconds; a row
// is emitted only when the largest preset window fits inside the session, no
// recording gap intersects it, and every stream has at least one valid value
// in every window.
FeatureMatrix featurize_session(const Session& session, const FeaturePreset& preset,
                                const FeatureParams& params = {});

// Same, reusing already-computed streams (the ablation path shares one
// StreamSet across presets).
FeatureMatrix featurize_streams(const Session& session, const StreamSet& streams,
                                const FeaturePreset& preset,
                                const FeatureParams& params = {});

// CSV round trip. Header: participant,dataset,week,section,sample_time,then
// feature columns. Doubles are written shortest-round-trip.
std::string to_csv(const FeatureMatrix& matrix);
FeatureMatrix from_csv(const std::string& text, const std::string& source_name);

// Compact binary cache, keyed so stale caches are never served.
void write_feature_cache(const FeatureMatrix& matrix, uint64_t key,
                         const std::string& path);
std::optional<FeatureMatrix> read_feature_cache(const std::string& path, uint64_t key);

uint64_t feature_cache_key(uint64_t trace_digest, const FeaturePreset& preset,
                           const FeatureParams& params);

}  // namespace motionid
