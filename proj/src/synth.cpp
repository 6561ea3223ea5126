#include "motionid/synth.hpp"

#include <algorithm>
#include <cmath>

#include "motionid/errors.hpp"
#include "motionid/rng.hpp"
#include "motionid/util.hpp"

namespace motionid {

namespace {

// Population means and spreads for the profile fields, in as_vector order.
// The spreads also normalize profile_distance and scale drift/noise steps.
constexpr std::array<double, 13> kProfileMean = {
    1.72,  1.72,                  // height, arm span
    -0.21, -0.52, 0.24,           // left hand rest
    0.21,  -0.52, 0.24,           // right hand rest
    0.022, 1.9,  6.0, 0.05, 25.0  // bob amp/freq, gestures, sway, turn rate
};
constexpr std::array<double, 13> kProfileSd = {
    0.085, 0.09,
    0.035, 0.045, 0.03,
    0.035, 0.045, 0.03,
    0.008, 0.3,  2.0, 0.018, 7.0
};

// Base profiles are drawn tighter than the step unit above, otherwise no
// feasible drift or noise setting can push one identity into another's
// neighborhood and the between design saturates at its ceiling.
constexpr double kBaseSpread = 0.45;
constexpr std::array<double, 13> kProfileLo = {
    1.4,  1.3,
    -0.4, -0.8, 0.05,
    0.02, -0.8, 0.05,
    0.001, 0.5, 0.5, 0.005, 5.0
};
constexpr std::array<double, 13> kProfileHi = {
    2.1, 2.2,
    -0.02, -0.2, 0.5,
    0.4,   -0.2, 0.5,
    0.06,  3.2,  20.0, 0.15, 60.0
};

ParticipantProfile from_vector(const std::array<double, 13>& v) {
    ParticipantProfile p;
    p.height = v[0];
    p.arm_span = v[1];
    p.rest_left = {v[2], v[3], v[4]};
    p.rest_right = {v[5], v[6], v[7]};
    p.bob_amplitude = v[8];
    p.bob_frequency = v[9];
    p.gesture_rate = v[10];
    p.sway_amplitude = v[11];
    p.turn_rate = v[12];
    return p;
}

std::array<double, 13> clamp_vector(std::array<double, 13> v) {
    for (size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i], kProfileLo[i], kProfileHi[i]);
    return v;
}

// Smooth zero-mean wobble: a handful of seeded sinusoids inside a frequency
// band. Component weights are normalized so `amplitude` sets the overall
// scale regardless of how the draws land.
class BandNoise {
  public:
    BandNoise() = default;
    BandNoise(Rng& rng, double amplitude, double f_lo, double f_hi) {
        std::array<double, kParts> w;
        double norm = 0.0;
        for (double& wi : w) {
            wi = rng.uniform(0.5, 1.0);
            norm += wi * wi;
        }
        norm = std::sqrt(norm);
        for (size_t k = 0; k < kParts; ++k) {
            amp_[k] = amplitude * w[k] / norm;
            omega_[k] = 2.0 * kPi * rng.uniform(f_lo, f_hi);
            phase_[k] = rng.uniform(0.0, 2.0 * kPi);
        }
    }

    double at(double t) const {
        double v = 0.0;
        for (size_t k = 0; k < kParts; ++k) v += amp_[k] * std::sin(omega_[k] * t + phase_[k]);
        return v;
    }

  private:
    static constexpr size_t kParts = 4;
    std::array<double, kParts> amp_ = {};
    std::array<double, kParts> omega_ = {};
    std::array<double, kParts> phase_ = {};
};

// A raised-cosine reach of one hand: forward and up, with a matching wrist
// tilt, over about a second.
struct Gesture {
    double start = 0.0;
    double duration = 1.0;
    bool right_hand = true;
    Vec3 reach;        // body-space displacement at the peak
    double tilt = 0.0;  // extra wrist pitch at the peak, degrees

    double envelope(double t) const {
        if (t <= start || t >= start + duration) return 0.0;
        double s = std::sin(kPi * (t - start) / duration);
        return s * s;
    }
};

std::vector<Gesture> plan_gestures(Rng rng, double rate_per_min, double duration_s) {
    std::vector<Gesture> out;
    if (rate_per_min <= 0.0) return out;
    double mean_gap = 60.0 / rate_per_min;
    double t = rng.uniform(0.5, 1.5) * mean_gap;
    while (t < duration_s) {
        Gesture g;
        g.start = t;
        g.duration = std::max(0.4, rng.normal(1.2, 0.3));
        g.right_hand = rng.next_below(2) == 1;
        g.reach = {rng.normal(0.0, 0.05), std::fabs(rng.normal(0.12, 0.05)),
                   std::fabs(rng.normal(0.22, 0.07))};
        g.tilt = rng.normal(-25.0, 8.0);
        out.push_back(g);
        t += rng.uniform(0.5, 1.5) * mean_gap;
    }
    return out;
}

// Piecewise slew toward randomly re-aimed heading targets: the "occasional
// heading changes" of a seated conversation.
class HeadingTrack {
  public:
    HeadingTrack(Rng rng, double turn_rate_deg_s, double duration_s)
        : turn_rate_(turn_rate_deg_s) {
        current_ = rng.uniform(-180.0, 180.0);
        double target = current_;
        double t = 0.0;
        while (t < duration_s) {
            t += rng.uniform(15.0, 45.0);
            target += rng.normal(0.0, 50.0);
            times_.push_back(t);
            targets_.push_back(target);
        }
        active_target_ = current_;
    }

    // Advance by dt and return the new heading; must be called with strictly
    // increasing times.
    double advance(double t, double dt) {
        while (next_ < times_.size() && t >= times_[next_]) {
            active_target_ = targets_[next_];
            ++next_;
        }
        double diff = active_target_ - current_;
        double step = turn_rate_ * dt;
        current_ += std::clamp(diff, -step, step);
        return current_;
    }

  private:
    double turn_rate_;
    double current_ = 0.0;
    double active_target_ = 0.0;
    size_t next_ = 0;
    std::vector<double> times_;
    std::vector<double> targets_;
};

struct SpawnTransform {
    double yaw = 0.0;
    Vec3 shift;  // horizontal, y is always 0
};

Pose spawn_pose(const Pose& pose, const Mat3& rot, const SpawnTransform& s) {
    Pose out;
    out.position = rot * pose.position + s.shift;
    out.rotation = {wrap_degrees(pose.rotation.yaw + s.yaw), pose.rotation.pitch,
                    pose.rotation.roll};
    return out;
}

}  // namespace

std::array<double, 13> ParticipantProfile::as_vector() const {
    return {height,       arm_span,     rest_left.x,  rest_left.y,    rest_left.z,
            rest_right.x, rest_right.y, rest_right.z, bob_amplitude,  bob_frequency,
            gesture_rate, sway_amplitude, turn_rate};
}

double profile_distance(const ParticipantProfile& a, const ParticipantProfile& b) {
    std::array<double, 13> va = a.as_vector();
    std::array<double, 13> vb = b.as_vector();
    double sum = 0.0;
    for (size_t i = 0; i < va.size(); ++i) {
        double d = (va[i] - vb[i]) / kProfileSd[i];
        sum += d * d;
    }
    return std::sqrt(sum / va.size());
}

void CohortSpec::validate() const {
    if (n_participants < 1 || n_participants > 99) {
        throw ConfigError("n_participants must be in [1, 99]");
    }
    if (weeks < 1 || weeks > 8) throw ConfigError("weeks must be in [1, 8]");
    if (sessions_per_week < 1 || sessions_per_week > 9) {
        throw ConfigError("sessions_per_week must be in [1, 9]");
    }
    if (!(session_minutes > 0.0) || session_minutes > 120.0) {
        throw ConfigError("session_minutes must be in (0, 120]");
    }
    if (!(hz >= 1.0) || hz > 240.0) throw ConfigError("hz must be in [1, 240]");
    if (!(session_noise >= 0.0) || session_noise > 1.0) {
        throw ConfigError("session_noise must be in [0, 1]");
    }
    if (!(weekly_drift >= 0.0)) throw ConfigError("weekly_drift must be non-negative");
}

ParticipantProfile sample_profile(Rng rng) {
    std::array<double, 13> v;
    for (size_t i = 0; i < v.size(); ++i) {
        v[i] = rng.normal(kProfileMean[i], kBaseSpread * kProfileSd[i]);
    }
    return from_vector(clamp_vector(v));
}

ParticipantProfile week_profile(const ParticipantProfile& base, Rng drift_rng, int week,
                                double weekly_drift) {
    std::array<double, 13> v = base.as_vector();
    for (int w = 2; w <= week; ++w) {
        for (size_t i = 0; i < v.size(); ++i) {
            v[i] += weekly_drift * kProfileSd[i] * drift_rng.next_normal();
        }
    }
    return from_vector(clamp_vector(v));
}

std::string synth_participant_id(int participant) {
    std::string id = "p";
    if (participant < 10) id += "0";
    return id + std::to_string(participant);
}

Session generate_session(const CohortSpec& spec, int participant, int week, int section) {
    spec.validate();
    if (participant < 0 || participant >= spec.n_participants) {
        throw ConfigError("participant index out of range");
    }
    if (week < 1 || week > spec.weeks) throw ConfigError("week out of range");
    if (section < 1 || section > spec.sessions_per_week) {
        throw ConfigError("section out of range");
    }

    Rng cohort_rng = Rng(spec.seed).derive("cohort");
    Rng part_rng = cohort_rng.derive("participant", participant);
    ParticipantProfile base = sample_profile(part_rng.derive("profile"));
    ParticipantProfile weekly =
        week_profile(base, part_rng.derive("drift"), week, spec.weekly_drift);

    uint64_t session_index =
        static_cast<uint64_t>(week - 1) * spec.sessions_per_week + (section - 1);
    Rng session_rng = part_rng.derive("session", session_index);

    // The session's working profile: the weekly one nudged by session noise.
    std::array<double, 13> v = weekly.as_vector();
    Rng noise_rng = session_rng.derive("noise");
    for (size_t i = 0; i < v.size(); ++i) {
        v[i] += spec.session_noise * kProfileSd[i] * noise_rng.next_normal();
    }
    ParticipantProfile prof = from_vector(clamp_vector(v));
    double lateral_scale = prof.arm_span / 1.7;

    double duration = spec.session_minutes * 60.0;
    size_t n_frames = static_cast<size_t>(duration * spec.hz) + 1;

    Rng texture = session_rng.derive("texture");
    BandNoise wander_x(texture, 0.25, 0.01, 0.06);
    BandNoise wander_z(texture, 0.25, 0.01, 0.06);
    BandNoise sway_x(texture, prof.sway_amplitude, 0.08, 0.35);
    BandNoise sway_z(texture, prof.sway_amplitude, 0.08, 0.35);
    BandNoise breathe_y(texture, 0.006, 0.2, 0.4);
    BandNoise head_yaw_jitter(texture, 7.0, 0.05, 0.4);
    BandNoise head_pitch(texture, 7.0, 0.05, 0.4);
    BandNoise head_roll(texture, 3.5, 0.05, 0.4);
    BandNoise hand_osc[2][3] = {
        {{texture, 0.02, 0.3, 1.2}, {texture, 0.02, 0.3, 1.2}, {texture, 0.02, 0.3, 1.2}},
        {{texture, 0.02, 0.3, 1.2}, {texture, 0.02, 0.3, 1.2}, {texture, 0.02, 0.3, 1.2}},
    };
    BandNoise hand_yaw[2] = {{texture, 14.0, 0.1, 0.6}, {texture, 14.0, 0.1, 0.6}};
    BandNoise hand_pitch[2] = {{texture, 12.0, 0.1, 0.6}, {texture, 12.0, 0.1, 0.6}};
    BandNoise hand_roll[2] = {{texture, 16.0, 0.1, 0.6}, {texture, 16.0, 0.1, 0.6}};
    double bob_phase = texture.uniform(0.0, 2.0 * kPi);
    double pitch_base = texture.normal(-6.0, 3.0);

    HeadingTrack heading(session_rng.derive("heading"), prof.turn_rate, duration);
    std::vector<Gesture> gestures =
        plan_gestures(session_rng.derive("gestures"), prof.gesture_rate, duration);

    SpawnTransform spawn;
    Mat3 spawn_rot = Mat3::identity();
    if (spec.spawn_randomization) {
        Rng spawn_rng = session_rng.derive("spawn");
        spawn.yaw = spawn_rng.uniform(-180.0, 180.0);
        spawn.shift = {spawn_rng.uniform(-2.0, 2.0), 0.0, spawn_rng.uniform(-2.0, 2.0)};
        spawn_rot = rotation_y(spawn.yaw);
    }

    Session session;
    session.participant_id = synth_participant_id(participant);
    session.dataset_id = 1;
    session.week = week;
    session.section_id = "s" + std::to_string(section);
    session.nominal_hz = spec.hz;
    session.frames.reserve(n_frames);

    double dt = 1.0 / spec.hz;
    size_t first_gesture = 0;
    for (size_t i = 0; i < n_frames; ++i) {
        double t = static_cast<double>(i) / spec.hz;
        double h = heading.advance(t, i == 0 ? 0.0 : dt);
        Mat3 body = rotation_y(h);

        Vec3 head_pos = {wander_x.at(t) + sway_x.at(t),
                         prof.height + breathe_y.at(t) +
                             prof.bob_amplitude *
                                 std::sin(2.0 * kPi * prof.bob_frequency * t + bob_phase),
                         wander_z.at(t) + sway_z.at(t)};
        Pose head = {head_pos,
                     {wrap_degrees(h + head_yaw_jitter.at(t)), pitch_base + head_pitch.at(t),
                      head_roll.at(t)}};

        while (first_gesture < gestures.size() &&
               gestures[first_gesture].start + gestures[first_gesture].duration < t) {
            ++first_gesture;
        }
        Vec3 reach[2] = {{0, 0, 0}, {0, 0, 0}};
        double tilt[2] = {0.0, 0.0};
        for (size_t g = first_gesture; g < gestures.size() && gestures[g].start < t; ++g) {
            double e = gestures[g].envelope(t);
            if (e == 0.0) continue;
            int hand = gestures[g].right_hand ? 1 : 0;
            reach[hand] = reach[hand] + gestures[g].reach * e;
            tilt[hand] += gestures[g].tilt * e;
        }

        Pose hands[2];
        const Vec3 rests[2] = {prof.rest_left, prof.rest_right};
        for (int hd = 0; hd < 2; ++hd) {
            Vec3 offset = {rests[hd].x * lateral_scale + hand_osc[hd][0].at(t) + reach[hd].x,
                           rests[hd].y + hand_osc[hd][1].at(t) + reach[hd].y,
                           rests[hd].z + hand_osc[hd][2].at(t) + reach[hd].z};
            hands[hd].position = head_pos + body * offset;
            hands[hd].rotation = {
                wrap_degrees(h + hand_yaw[hd].at(t)),
                std::clamp(-12.0 + hand_pitch[hd].at(t) + tilt[hd], -75.0, 75.0),
                hand_roll[hd].at(t)};
        }

        MotionFrame frame;
        frame.t = t;
        frame.head = spec.spawn_randomization ? spawn_pose(head, spawn_rot, spawn) : head;
        frame.left = spec.spawn_randomization ? spawn_pose(hands[0], spawn_rot, spawn) : hands[0];
        frame.right = spec.spawn_randomization ? spawn_pose(hands[1], spawn_rot, spawn) : hands[1];
        session.frames.push_back(frame);
    }
    return session;
}

std::vector<Session> generate_cohort(const CohortSpec& spec) {
    spec.validate();
    std::vector<Session> sessions(spec.n_sessions());
    int per_participant = spec.weeks * spec.sessions_per_week;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < spec.n_sessions(); ++i) {
        int participant = i / per_participant;
        int week = (i % per_participant) / spec.sessions_per_week + 1;
        int section = i % spec.sessions_per_week + 1;
        sessions[i] = generate_session(spec, participant, week, section);
    }
    return sessions;
}

std::vector<std::string> write_cohort(const CohortSpec& spec, const std::string& out_dir) {
    spec.validate();
    ensure_dir(out_dir);
    std::vector<std::string> paths(spec.n_sessions());
    int per_participant = spec.weeks * spec.sessions_per_week;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < spec.n_sessions(); ++i) {
        int participant = i / per_participant;
        int week = (i % per_participant) / spec.sessions_per_week + 1;
        int section = i % spec.sessions_per_week + 1;
        Session session = generate_session(spec, participant, week, section);
        std::string name = synth_participant_id(participant) + "_w" + std::to_string(week) +
                           "_s" + std::to_string(section) + ".jsonl";
        std::string path = out_dir + "/" + name;
        write_file(path, serialize_trace(session));
        paths[i] = path;
    }
    return paths;
}

}  // namespace motionid
