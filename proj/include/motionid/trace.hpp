#pragma once

#include <optional>
#include <string>
#include <vector>

#include "motionid/geom.hpp"

// Telemetry data model and the JSONL trace format.

namespace motionid {

struct Pose {
    Vec3 position;
    Euler rotation;
};

// One 30 Hz sample. head/left/right are world poses: when a trace carries root
// records the root is composed in at parse time and not kept, since downstream
// analysis only ever sees the avatar as another user would.
struct MotionFrame {
    double t = 0.0;
    Pose head, left, right;
    std::optional<Pose> root;
};

struct Session {
    std::string participant_id;
    int dataset_id = 1;
    int week = 1;
    std::string section_id;
    double nominal_hz = 30.0;
    std::vector<MotionFrame> frames;

    double duration() const { return frames.empty() ? 0.0 : frames.back().t; }
};

// World pose of a local pose carried by a root.
Pose compose_root(const Pose& root, const Pose& local);

// Parses one JSONL trace. Errors name the offending line. Frames must be
// strictly increasing in t; root records, when present, are folded into the
// stored world poses.
Session parse_trace(const std::string& text, const std::string& source_name);
Session parse_trace_file(const std::string& path);

// Inverse of parse_trace up to float round-trip (exact with our formatter).
std::string serialize_trace(const Session& session);
void write_trace_file(const Session& session, const std::string& path);

struct Gap {
    double t_before = 0.0;
    double t_after = 0.0;
    double length() const { return t_after - t_before; }
};

struct GapReport {
    std::vector<Gap> gaps;
    bool clean() const { return gaps.empty(); }
};

// Every inter-frame interval longer than max_gap seconds.
GapReport validate_rate(const Session& session, double max_gap = 0.5);

// Sort key for deterministic session ordering in reports and matrices.
bool session_order(const Session& a, const Session& b);

}  // namespace motionid
