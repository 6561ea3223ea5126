#include "motionid/features_ref.hpp"

#include <algorithm>
#include <cmath>

#include "motionid/body_space.hpp"
#include "motionid/errors.hpp"

namespace motionid {

namespace {

struct NaiveStream {
    std::vector<double> values;
    int first_valid = 0;
};

Vec3 object_position(const MotionFrame& f, const std::string& obj) {
    if (obj == "head") return f.head.position;
    if (obj == "left") return f.left.position;
    return f.right.position;
}

Euler object_rotation(const MotionFrame& f, const std::string& obj) {
    if (obj == "head") return f.head.rotation;
    if (obj == "left") return f.left.rotation;
    return f.right.rotation;
}

// Body-space displacement for a pair tag, evaluated straight from the
// definitions: d = p_alpha - p_beta rotated by the frame's heading matrix.
Vec3 pair_displacement(const MotionFrame& f, double theta, const std::string& pair) {
    Vec3 a, b;
    if (pair == "hl") {
        a = f.head.position;
        b = f.left.position;
    } else if (pair == "hr") {
        a = f.head.position;
        b = f.right.position;
    } else {
        a = f.right.position;
        b = f.left.position;
    }
    Vec3 d = a - b;
    double c = std::cos(theta), s = std::sin(theta);
    return {c * d.x - s * d.z, d.y, s * d.x + c * d.z};
}

NaiveStream build_stream(const Session& session,
                         const std::vector<BscFrameContext>& ctxs,
                         const std::string& name) {
    NaiveStream out;
    size_t n = session.frames.size();
    out.values.resize(n, 0.0);

    auto under = name.find('_');
    std::string who = name.substr(0, under);
    std::string what = name.substr(under + 1);

    bool is_pair = (who == "hl" || who == "hr" || who == "rl");

    for (size_t i = 0; i < n; ++i) {
        const MotionFrame& f = session.frames[i];
        double v = 0.0;
        if (!is_pair) {
            if (what == "px") v = object_position(f, who).x;
            else if (what == "py") v = object_position(f, who).y;
            else if (what == "pz") v = object_position(f, who).z;
            else if (what == "yaw") v = object_rotation(f, who).yaw;
            else if (what == "pitch") v = object_rotation(f, who).pitch;
            else if (what == "roll") v = object_rotation(f, who).roll;
            else {
                // Speed of the tracked object, one-frame difference in m/s.
                out.first_valid = 1;
                if (i == 0) continue;
                double dt = f.t - session.frames[i - 1].t;
                Vec3 d = (object_position(f, who) -
                          object_position(session.frames[i - 1], who)) / dt;
                if (what == "speed") v = d.norm();
                else if (what == "speed_h") v = std::sqrt(d.x * d.x + d.z * d.z);
                else if (what == "speed_v") v = std::abs(d.y);
                else throw InternalError("unknown stream " + name);
            }
        } else {
            Vec3 b = pair_displacement(f, ctxs[i].heading_theta, who);
            if (what == "bx") v = b.x;
            else if (what == "by") v = b.y;
            else if (what == "bz") v = b.z;
            else {
                out.first_valid = 1;
                if (i == 0) continue;
                double dt = f.t - session.frames[i - 1].t;
                Vec3 prev = pair_displacement(session.frames[i - 1],
                                              ctxs[i - 1].heading_theta, who);
                Vec3 u = (b - prev) / dt;
                if (what == "bspeed") v = u.norm();
                else if (what == "bspeed_h") v = std::sqrt(u.x * u.x + u.z * u.z);
                else if (what == "bspeed_v") v = std::abs(u.y);
                else if (what == "bspeed_f") v = std::abs(u.z);
                else if (what == "bspeed_r") v = std::abs(u.x);
                else throw InternalError("unknown stream " + name);
            }
        }
        out.values[i] = v;
    }
    return out;
}

double naive_stat(std::vector<double> vals, Stat stat) {
    size_t n = vals.size();
    switch (stat) {
        case Stat::mean: {
            double s = 0.0;
            for (double v : vals) s += v;
            return s / n;
        }
        case Stat::median: {
            std::sort(vals.begin(), vals.end());
            if (n % 2 == 1) return vals[n / 2];
            return (vals[n / 2 - 1] + vals[n / 2]) / 2.0;
        }
        case Stat::max: {
            double m = vals[0];
            for (double v : vals) m = std::max(m, v);
            return m;
        }
        case Stat::min: {
            double m = vals[0];
            for (double v : vals) m = std::min(m, v);
            return m;
        }
        case Stat::sd: {
            if (n == 1) return 0.0;
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= n;
            double acc = 0.0;
            for (double v : vals) acc += (v - mean) * (v - mean);
            return std::sqrt(acc / (n - 1));
        }
    }
    throw InternalError("unreachable stat");
}

}  // namespace

FeatureMatrix featurize_session_reference(const Session& session,
                                          const FeaturePreset& preset,
                                          const FeatureParams& params) {
    FeatureMatrix out;
    out.columns = preset_columns(preset);
    if (session.frames.empty()) return out;

    auto ctxs = bsc_contexts_reference(session, params.bsc_half_window_s);

    std::vector<NaiveStream> streams;
    for (const std::string& name : preset.streams)
        streams.push_back(build_stream(session, ctxs, name));

    double session_end = session.frames.back().t;
    double big = preset.largest_window();

    for (double t = 0.0; t <= session_end; t += 1.0) {
        if (t - big / 2.0 < 0.0 || t + big / 2.0 > session_end) continue;

        // Any recording gap that overlaps the largest window kills the row.
        bool gapped = false;
        for (size_t i = 1; i < session.frames.size(); ++i) {
            double t0 = session.frames[i - 1].t;
            double t1 = session.frames[i].t;
            if (t1 - t0 > params.max_gap_s && t0 < t + big / 2.0 &&
                t1 > t - big / 2.0) {
                gapped = true;
                break;
            }
        }
        if (gapped) continue;

        std::vector<double> row;
        row.reserve(out.columns.size());
        bool valid = true;
        for (size_t s = 0; s < streams.size() && valid; ++s) {
            for (double w : preset.windows_s) {
                std::vector<double> in_window;
                for (size_t i = streams[s].first_valid; i < session.frames.size(); ++i) {
                    if (std::abs(session.frames[i].t - t) <= w / 2.0)
                        in_window.push_back(streams[s].values[i]);
                }
                if (in_window.empty()) {
                    valid = false;
                    break;
                }
                for (int st = 0; st < kStatCount; ++st)
                    row.push_back(naive_stat(in_window, static_cast<Stat>(st)));
            }
        }
        if (!valid) continue;

        out.rows.push_back({session.participant_id, session.dataset_id, session.week,
                            session.section_id, t});
        out.values.insert(out.values.end(), row.begin(), row.end());
    }
    return out;
}

}  // namespace motionid
