#include "motionid/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "motionid/body_space.hpp"
#include "motionid/errors.hpp"
#include "motionid/util.hpp"

namespace motionid {

namespace {

const char* kObjects[3] = {"head", "left", "right"};
const char* kPairs[3] = {"hl", "hr", "rl"};

std::vector<std::string> make_stream_names() {
    std::vector<std::string> names;
    // Legacy global-position streams (M1 only).
    for (const char* o : kObjects)
        for (const char* q : {"px", "pz", "yaw"}) names.push_back(std::string(o) + "_" + q);
    // Raw pose streams.
    for (const char* o : kObjects)
        for (const char* q : {"py", "pitch", "roll"}) names.push_back(std::string(o) + "_" + q);
    // Body-space displacements per device pair.
    for (const char* p : kPairs)
        for (const char* q : {"bx", "by", "bz"}) names.push_back(std::string(p) + "_" + q);
    // Device speeds.
    for (const char* o : kObjects)
        for (const char* q : {"speed", "speed_h", "speed_v"})
            names.push_back(std::string(o) + "_" + q);
    // Body-space displacement speeds.
    for (const char* p : kPairs)
        for (const char* q : {"bspeed", "bspeed_h", "bspeed_v", "bspeed_f", "bspeed_r"})
            names.push_back(std::string(p) + "_" + q);
    return names;
}

std::vector<std::string> slice(const std::vector<std::string>& v, size_t from, size_t to) {
    return {v.begin() + from, v.begin() + to};
}

std::vector<FeaturePreset> make_presets() {
    const auto& all = all_stream_names();
    // Name table layout: [0,9) legacy, [9,18) raw pose, [18,27) bsc
    // displacement, [27,36) speeds, [36,51) bsc displacement speeds.
    auto legacy = slice(all, 0, 9);
    auto raw = slice(all, 9, 18);
    auto bsc = slice(all, 18, 27);
    auto speed = slice(all, 27, 36);
    auto bspeed = slice(all, 36, 51);

    auto cat = [](std::initializer_list<std::vector<std::string>> parts) {
        std::vector<std::string> out;
        for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
        return out;
    };

    std::vector<FeaturePreset> presets;
    presets.push_back({"M1", cat({legacy, raw}), {1.0}});

    // M2 drops the horizontal positions, keeping yaw.
    std::vector<std::string> yaw_only;
    for (const auto& s : legacy)
        if (s.ends_with("_yaw")) yaw_only.push_back(s);
    presets.push_back({"M2", cat({yaw_only, raw}), {1.0}});

    presets.push_back({"M3", raw, {1.0}});
    presets.push_back({"M4", raw, {1.0, 3.0, 10.0, 30.0}});
    presets.push_back({"M5", cat({raw, bsc}), {1.0, 3.0, 10.0, 30.0}});
    presets.push_back({"M6", cat({raw, bsc, speed, bspeed}), {1.0, 3.0, 10.0, 30.0}});
    return presets;
}

}  // namespace

std::string FeatureParams::cache_key_text() const {
    return "bsc=" + format_double(bsc_half_window_s) + ";gap=" + format_double(max_gap_s);
}

int StreamSet::index_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    throw InternalError("unknown stream: " + name);
}

const std::vector<std::string>& all_stream_names() {
    static const std::vector<std::string> names = make_stream_names();
    return names;
}

const std::vector<FeaturePreset>& all_presets() {
    static const std::vector<FeaturePreset> presets = make_presets();
    return presets;
}

const FeaturePreset& preset_by_name(const std::string& name) {
    for (const auto& p : all_presets())
        if (p.name == name) return p;
    throw ConfigError("unknown preset: " + name);
}

double FeaturePreset::largest_window() const {
    double w = 0.0;
    for (double v : windows_s) w = std::max(w, v);
    return w;
}

const char* stat_name(Stat s) {
    switch (s) {
        case Stat::mean: return "mean";
        case Stat::median: return "median";
        case Stat::max: return "max";
        case Stat::min: return "min";
        case Stat::sd: return "sd";
    }
    throw InternalError("unreachable stat");
}

double summarize(std::span<const double> window_values, Stat stat) {
    size_t n = window_values.size();
    if (n == 0) throw DataError("summarize: empty window");
    switch (stat) {
        case Stat::mean: {
            double s = 0.0;
            for (double v : window_values) s += v;
            return s / n;
        }
        case Stat::median: {
            std::vector<double> scratch(window_values.begin(), window_values.end());
            auto mid = scratch.begin() + n / 2;
            std::nth_element(scratch.begin(), mid, scratch.end());
            if (n % 2 == 1) return *mid;
            double lower = *std::max_element(scratch.begin(), mid);
            return (lower + *mid) / 2.0;
        }
        case Stat::max: {
            double m = window_values[0];
            for (double v : window_values) m = std::max(m, v);
            return m;
        }
        case Stat::min: {
            double m = window_values[0];
            for (double v : window_values) m = std::min(m, v);
            return m;
        }
        case Stat::sd: {
            if (n == 1) return 0.0;
            double mean = 0.0;
            for (double v : window_values) mean += v;
            mean /= n;
            double acc = 0.0;
            for (double v : window_values) acc += (v - mean) * (v - mean);
            return std::sqrt(acc / (n - 1));
        }
    }
    throw InternalError("unreachable stat");
}

uint64_t FeatureMatrix::column_digest() const {
    uint64_t h = fnv1a("feature-columns-v1");
    for (const auto& c : columns) {
        h = fnv1a(c, h);
        h = fnv1a("|", h);
    }
    return h;
}

void FeatureMatrix::append_rows(const FeatureMatrix& other) {
    if (columns != other.columns)
        throw InternalError("append_rows: column schema mismatch");
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
    values.insert(values.end(), other.values.begin(), other.values.end());
}

std::vector<std::string> preset_columns(const FeaturePreset& preset) {
    std::vector<std::string> cols;
    cols.reserve(preset.feature_count());
    for (const auto& stream : preset.streams)
        for (double w : preset.windows_s)
            for (int st = 0; st < kStatCount; ++st)
                cols.push_back(stream + "_w" + std::to_string(static_cast<int>(w)) +
                               "s_" + stat_name(static_cast<Stat>(st)));
    return cols;
}

StreamSet compute_streams(const Session& session, const FeatureParams& params) {
    if (session.frames.size() < 2)
        throw DataError("compute_streams: need at least 2 frames for speed streams");

    const auto& frames = session.frames;
    size_t n = frames.size();
    StreamSet out;
    out.names = all_stream_names();
    out.values.assign(out.names.size(), std::vector<double>(n, 0.0));
    out.first_valid.assign(out.names.size(), 0);

    auto ctxs = bsc_contexts(session, params.bsc_half_window_s);

    // Layout mirrors all_stream_names(): legacy 0..8, raw 9..17, bsc
    // displacement 18..26, speeds 27..35, bsc speeds 36..50.
    std::vector<Vec3> disp[3];
    for (auto& d : disp) d.resize(n);

    for (size_t i = 0; i < n; ++i) {
        const MotionFrame& f = frames[i];
        const Pose* objs[3] = {&f.head, &f.left, &f.right};
        for (int o = 0; o < 3; ++o) {
            out.values[o * 3 + 0][i] = objs[o]->position.x;
            out.values[o * 3 + 1][i] = objs[o]->position.z;
            out.values[o * 3 + 2][i] = objs[o]->rotation.yaw;
            out.values[9 + o * 3 + 0][i] = objs[o]->position.y;
            out.values[9 + o * 3 + 1][i] = objs[o]->rotation.pitch;
            out.values[9 + o * 3 + 2][i] = objs[o]->rotation.roll;
        }
        Vec3 ds[3] = {f.head.position - f.left.position,
                      f.head.position - f.right.position,
                      f.right.position - f.left.position};
        for (int p = 0; p < 3; ++p) {
            Vec3 b = to_body_space(ctxs[i], ds[p]);
            disp[p][i] = b;
            out.values[18 + p * 3 + 0][i] = b.x;
            out.values[18 + p * 3 + 1][i] = b.y;
            out.values[18 + p * 3 + 2][i] = b.z;
        }
    }

    for (int s = 27; s < 51; ++s) out.first_valid[s] = 1;
    for (size_t i = 1; i < n; ++i) {
        double dt = frames[i].t - frames[i - 1].t;
        const Pose* cur[3] = {&frames[i].head, &frames[i].left, &frames[i].right};
        const Pose* prev[3] = {&frames[i - 1].head, &frames[i - 1].left,
                               &frames[i - 1].right};
        for (int o = 0; o < 3; ++o) {
            Vec3 v = (cur[o]->position - prev[o]->position) / dt;
            out.values[27 + o * 3 + 0][i] = v.norm();
            out.values[27 + o * 3 + 1][i] = std::sqrt(v.x * v.x + v.z * v.z);
            out.values[27 + o * 3 + 2][i] = std::abs(v.y);
        }
        for (int p = 0; p < 3; ++p) {
            Vec3 u = (disp[p][i] - disp[p][i - 1]) / dt;
            out.values[36 + p * 5 + 0][i] = u.norm();
            out.values[36 + p * 5 + 1][i] = std::sqrt(u.x * u.x + u.z * u.z);
            out.values[36 + p * 5 + 2][i] = std::abs(u.y);
            out.values[36 + p * 5 + 3][i] = std::abs(u.z);
            out.values[36 + p * 5 + 4][i] = std::abs(u.x);
        }
    }
    return out;
}

namespace {

// All five statistics in one scratch pass; must equal summarize() per stat.
void stats_into(std::vector<double>& scratch, double* out) {
    size_t n = scratch.size();
    double sum = 0.0, mn = scratch[0], mx = scratch[0];
    for (double v : scratch) {
        sum += v;
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    double mean = sum / n;
    double acc = 0.0;
    for (double v : scratch) acc += (v - mean) * (v - mean);
    double sd = n == 1 ? 0.0 : std::sqrt(acc / (n - 1));

    double median;
    auto mid = scratch.begin() + n / 2;
    std::nth_element(scratch.begin(), mid, scratch.end());
    if (n % 2 == 1) {
        median = *mid;
    } else {
        double lower = *std::max_element(scratch.begin(), mid);
        median = (lower + *mid) / 2.0;
    }

    out[0] = mean;
    out[1] = median;
    out[2] = mx;
    out[3] = mn;
    out[4] = sd;
}

}  // namespace

FeatureMatrix featurize_streams(const Session& session, const StreamSet& streams,
                                const FeaturePreset& preset,
                                const FeatureParams& params) {
    FeatureMatrix out;
    out.columns = preset_columns(preset);
    if (session.frames.empty()) return out;

    const auto& frames = session.frames;
    size_t n = frames.size();
    double session_end = frames.back().t;
    double big = preset.largest_window();

    GapReport gaps = validate_rate(session, params.max_gap_s);

    // Candidate instants: integer seconds whose largest window fits and meets
    // no recording gap.
    std::vector<double> instants;
    size_t gap_idx = 0;
    for (double t = 0.0; t <= session_end; t += 1.0) {
        if (t - big / 2.0 < 0.0 || t + big / 2.0 > session_end) continue;
        while (gap_idx < gaps.gaps.size() && gaps.gaps[gap_idx].t_after <= t - big / 2.0)
            ++gap_idx;
        if (gap_idx < gaps.gaps.size() && gaps.gaps[gap_idx].t_before < t + big / 2.0 &&
            gaps.gaps[gap_idx].t_after > t - big / 2.0)
            continue;
        instants.push_back(t);
    }
    if (instants.empty()) return out;

    // Frame index range per (window, instant), via two pointers. Comparisons
    // are written exactly like the reference's |t_f - t| <= w/2.
    size_t n_windows = preset.windows_s.size();
    std::vector<std::vector<std::pair<uint32_t, uint32_t>>> ranges(n_windows);
    for (size_t w = 0; w < n_windows; ++w) {
        double half = preset.windows_s[w] / 2.0;
        ranges[w].resize(instants.size());
        size_t lo = 0, hi = 0;
        for (size_t r = 0; r < instants.size(); ++r) {
            double t = instants[r];
            while (lo < n && t - frames[lo].t > half) ++lo;
            if (hi < lo) hi = lo;
            while (hi < n && frames[hi].t - t <= half) ++hi;
            ranges[w][r] = {static_cast<uint32_t>(lo), static_cast<uint32_t>(hi)};
        }
    }

    size_t n_cols = out.columns.size();
    std::vector<double> values(instants.size() * n_cols, 0.0);
    std::vector<char> row_ok(instants.size(), 1);

    std::vector<double> scratch;
    scratch.reserve(1024);
    for (size_t s = 0; s < preset.streams.size(); ++s) {
        int sidx = streams.index_of(preset.streams[s]);
        const std::vector<double>& vals = streams.values[sidx];
        uint32_t first = static_cast<uint32_t>(streams.first_valid[sidx]);
        for (size_t w = 0; w < n_windows; ++w) {
            size_t col_base = (s * n_windows + w) * kStatCount;
            for (size_t r = 0; r < instants.size(); ++r) {
                if (!row_ok[r]) continue;
                auto [lo, hi] = ranges[w][r];
                lo = std::max(lo, first);
                if (lo >= hi) {
                    row_ok[r] = 0;
                    continue;
                }
                scratch.assign(vals.begin() + lo, vals.begin() + hi);
                stats_into(scratch, values.data() + r * n_cols + col_base);
            }
        }
    }

    for (size_t r = 0; r < instants.size(); ++r) {
        if (!row_ok[r]) continue;
        out.rows.push_back({session.participant_id, session.dataset_id, session.week,
                            session.section_id, instants[r]});
        out.values.insert(out.values.end(), values.begin() + r * n_cols,
                          values.begin() + (r + 1) * n_cols);
    }
    return out;
}

FeatureMatrix featurize_session(const Session& session, const FeaturePreset& preset,
                                const FeatureParams& params) {
    StreamSet streams = compute_streams(session, params);
    return featurize_streams(session, streams, preset, params);
}

std::string to_csv(const FeatureMatrix& matrix) {
    std::string out = "participant,dataset,week,section,sample_time";
    for (const auto& c : matrix.columns) {
        out += ',';
        out += c;
    }
    out += '\n';
    for (size_t r = 0; r < matrix.n_rows(); ++r) {
        const RowMeta& m = matrix.rows[r];
        if (m.participant.find_first_of(",\n") != std::string::npos ||
            m.section.find_first_of(",\n") != std::string::npos)
            throw DataError("to_csv: id fields may not contain commas or newlines");
        out += m.participant;
        out += ',';
        out += std::to_string(m.dataset);
        out += ',';
        out += std::to_string(m.week);
        out += ',';
        out += m.section;
        out += ',';
        append_double(out, m.sample_time);
        for (double v : matrix.row(r)) {
            out += ',';
            append_double(out, v);
        }
        out += '\n';
    }
    return out;
}

namespace {

std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> out;
    size_t pos = 0;
    while (true) {
        size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

double parse_double_field(std::string_view field, const std::string& source, size_t line) {
    double v = 0.0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size())
        throw DataError(source + ":" + std::to_string(line) + ": bad number '" +
                        std::string(field) + "'");
    return v;
}

}  // namespace

FeatureMatrix from_csv(const std::string& text, const std::string& source_name) {
    FeatureMatrix out;
    size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        ++line_no;
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        auto fields = split_line(line);
        if (line_no == 1) {
            if (fields.size() < 5)
                throw DataError(source_name + ": header too short");
            for (size_t i = 5; i < fields.size(); ++i)
                out.columns.emplace_back(fields[i]);
            continue;
        }
        if (fields.size() != out.columns.size() + 5)
            throw DataError(source_name + ":" + std::to_string(line_no) +
                            ": wrong field count");
        RowMeta meta;
        meta.participant = std::string(fields[0]);
        meta.dataset = static_cast<int>(parse_double_field(fields[1], source_name, line_no));
        meta.week = static_cast<int>(parse_double_field(fields[2], source_name, line_no));
        meta.section = std::string(fields[3]);
        meta.sample_time = parse_double_field(fields[4], source_name, line_no);
        out.rows.push_back(std::move(meta));
        for (size_t i = 5; i < fields.size(); ++i)
            out.values.push_back(parse_double_field(fields[i], source_name, line_no));
    }
    return out;
}

namespace {

void put_u32(std::string& out, uint32_t v) { out.append(reinterpret_cast<char*>(&v), 4); }
void put_u64(std::string& out, uint64_t v) { out.append(reinterpret_cast<char*>(&v), 8); }
void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out += s;
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    const std::string& path;

    void need(size_t n) {
        if (pos + n > buf.size()) throw DataError(path + ": truncated feature cache");
    }
    uint32_t u32() {
        need(4);
        uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        need(n);
        std::string s(buf.data() + pos, n);
        pos += n;
        return s;
    }
};

constexpr char kCacheMagic[4] = {'M', 'I', 'F', 'C'};
constexpr uint32_t kCacheVersion = 1;

}  // namespace

void write_feature_cache(const FeatureMatrix& matrix, uint64_t key,
                         const std::string& path) {
    std::string out;
    out.append(kCacheMagic, 4);
    put_u32(out, kCacheVersion);
    put_u64(out, key);
    put_u32(out, static_cast<uint32_t>(matrix.n_cols()));
    for (const auto& c : matrix.columns) put_str(out, c);
    put_u64(out, matrix.n_rows());
    for (const auto& m : matrix.rows) {
        put_str(out, m.participant);
        put_u32(out, static_cast<uint32_t>(m.dataset));
        put_u32(out, static_cast<uint32_t>(m.week));
        put_str(out, m.section);
        put_u64(out, std::bit_cast<uint64_t>(m.sample_time));
    }
    size_t bytes = matrix.values.size() * sizeof(double);
    out.append(reinterpret_cast<const char*>(matrix.values.data()), bytes);
    write_file(path, out);
}

std::optional<FeatureMatrix> read_feature_cache(const std::string& path, uint64_t key) {
    std::string buf;
    try {
        buf = read_file(path);
    } catch (const DataError&) {
        return std::nullopt;
    }
    Reader r{buf, 0, path};
    r.need(4);
    if (std::memcmp(buf.data(), kCacheMagic, 4) != 0) return std::nullopt;
    r.pos = 4;
    if (r.u32() != kCacheVersion) return std::nullopt;
    if (r.u64() != key) return std::nullopt;

    FeatureMatrix out;
    uint32_t n_cols = r.u32();
    out.columns.reserve(n_cols);
    for (uint32_t i = 0; i < n_cols; ++i) out.columns.push_back(r.str());
    uint64_t n_rows = r.u64();
    out.rows.reserve(n_rows);
    for (uint64_t i = 0; i < n_rows; ++i) {
        RowMeta m;
        m.participant = r.str();
        m.dataset = static_cast<int>(r.u32());
        m.week = static_cast<int>(r.u32());
        m.section = r.str();
        m.sample_time = std::bit_cast<double>(r.u64());
        out.rows.push_back(std::move(m));
    }
    size_t bytes = static_cast<size_t>(n_rows) * n_cols * sizeof(double);
    r.need(bytes);
    out.values.resize(static_cast<size_t>(n_rows) * n_cols);
    std::memcpy(out.values.data(), buf.data() + r.pos, bytes);
    return out;
}

uint64_t feature_cache_key(uint64_t trace_digest, const FeaturePreset& preset,
                           const FeatureParams& params) {
    uint64_t h = fnv1a("feature-cache-v1");
    h = fnv1a(hex_u64(trace_digest), h);
    h = fnv1a(preset.name, h);
    h = fnv1a(params.cache_key_text(), h);
    return h;
}

}  // namespace motionid
