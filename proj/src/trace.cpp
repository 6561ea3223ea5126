#include "motionid/trace.hpp"

#include <cmath>
#include <tuple>

#include <json.hpp>

#include "motionid/errors.hpp"
#include "motionid/util.hpp"

namespace motionid {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& source, size_t line, const std::string& msg) {
    throw DataError(source + ":" + std::to_string(line) + ": " + msg);
}

double finite_number(const json& j, const std::string& source, size_t line,
                     const char* what) {
    if (!j.is_number()) fail(source, line, std::string(what) + " is not a number");
    double v = j.get<double>();
    if (!std::isfinite(v)) fail(source, line, std::string(what) + " is not finite");
    return v;
}

Pose parse_pose(const json& j, const std::string& source, size_t line, const char* what) {
    if (!j.is_object() || !j.contains("p") || !j.contains("r"))
        fail(source, line, std::string(what) + " must be an object with p and r");
    const json& p = j["p"];
    const json& r = j["r"];
    if (!p.is_array() || p.size() != 3 || !r.is_array() || r.size() != 3)
        fail(source, line, std::string(what) + " p/r must be 3-element arrays");
    Pose pose;
    pose.position = {finite_number(p[0], source, line, what),
                     finite_number(p[1], source, line, what),
                     finite_number(p[2], source, line, what)};
    pose.rotation = {finite_number(r[0], source, line, what),
                     finite_number(r[1], source, line, what),
                     finite_number(r[2], source, line, what)};
    return pose;
}

void append_pose(std::string& out, const char* key, const Pose& pose) {
    out += "\"";
    out += key;
    out += "\":{\"p\":[";
    append_double(out, pose.position.x);
    out += ',';
    append_double(out, pose.position.y);
    out += ',';
    append_double(out, pose.position.z);
    out += "],\"r\":[";
    append_double(out, pose.rotation.yaw);
    out += ',';
    append_double(out, pose.rotation.pitch);
    out += ',';
    append_double(out, pose.rotation.roll);
    out += "]}";
}

}  // namespace

Pose compose_root(const Pose& root, const Pose& local) {
    Pose out;
    compose_transform(root.position, root.rotation, local.position, local.rotation,
                      out.position, out.rotation);
    return out;
}

Session parse_trace(const std::string& text, const std::string& source_name) {
    Session session;
    bool have_header = false;
    size_t line_no = 0;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        ++line_no;
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;

        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(source_name, line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!rec.is_object() || !rec.contains("type") || !rec["type"].is_string())
            fail(source_name, line_no, "record has no type");
        std::string type = rec["type"].get<std::string>();

        if (type == "session") {
            if (have_header) fail(source_name, line_no, "duplicate session header");
            if (!session.frames.empty())
                fail(source_name, line_no, "session header after frame records");
            try {
                session.participant_id = rec.at("participant").get<std::string>();
                session.dataset_id = rec.at("dataset").get<int>();
                session.week = rec.at("week").get<int>();
                session.section_id = rec.at("section").get<std::string>();
                session.nominal_hz = rec.value("hz", 30.0);
            } catch (const json::exception& e) {
                fail(source_name, line_no, std::string("bad session header: ") + e.what());
            }
            if (session.dataset_id != 1 && session.dataset_id != 2)
                fail(source_name, line_no, "dataset must be 1 or 2");
            if (session.week < 1 || session.week > 8)
                fail(source_name, line_no, "week must be in 1..8");
            have_header = true;
        } else if (type == "frame") {
            if (!have_header) fail(source_name, line_no, "frame before session header");
            MotionFrame frame;
            if (!rec.contains("t")) fail(source_name, line_no, "frame has no t");
            frame.t = finite_number(rec["t"], source_name, line_no, "t");
            if (frame.t < 0.0) fail(source_name, line_no, "t is negative");
            if (!session.frames.empty() && frame.t <= session.frames.back().t)
                fail(source_name, line_no, "t is not strictly increasing");
            if (!rec.contains("head") || !rec.contains("left") || !rec.contains("right"))
                fail(source_name, line_no, "frame is missing a tracked pose");
            frame.head = parse_pose(rec["head"], source_name, line_no, "head");
            frame.left = parse_pose(rec["left"], source_name, line_no, "left");
            frame.right = parse_pose(rec["right"], source_name, line_no, "right");
            if (rec.contains("root")) {
                Pose root = parse_pose(rec["root"], source_name, line_no, "root");
                frame.head = compose_root(root, frame.head);
                frame.left = compose_root(root, frame.left);
                frame.right = compose_root(root, frame.right);
            }
            session.frames.push_back(frame);
        } else {
            fail(source_name, line_no, "unknown record type: " + type);
        }
    }
    if (!have_header) throw DataError(source_name + ": missing session header");
    if (session.frames.empty()) throw DataError(source_name + ": no frames");
    return session;
}

Session parse_trace_file(const std::string& path) {
    return parse_trace(read_file(path), path);
}

std::string serialize_trace(const Session& session) {
    std::string out;
    out.reserve(64 + session.frames.size() * 320);
    out += "{\"type\":\"session\",\"participant\":";
    out += nlohmann::json(session.participant_id).dump();
    out += ",\"dataset\":" + std::to_string(session.dataset_id);
    out += ",\"week\":" + std::to_string(session.week);
    out += ",\"section\":";
    out += nlohmann::json(session.section_id).dump();
    out += ",\"hz\":";
    append_double(out, session.nominal_hz);
    out += "}\n";
    for (const MotionFrame& frame : session.frames) {
        out += "{\"type\":\"frame\",\"t\":";
        append_double(out, frame.t);
        out += ',';
        append_pose(out, "head", frame.head);
        out += ',';
        append_pose(out, "left", frame.left);
        out += ',';
        append_pose(out, "right", frame.right);
        out += "}\n";
    }
    return out;
}

void write_trace_file(const Session& session, const std::string& path) {
    write_file(path, serialize_trace(session));
}

GapReport validate_rate(const Session& session, double max_gap) {
    GapReport report;
    for (size_t i = 1; i < session.frames.size(); ++i) {
        double t0 = session.frames[i - 1].t;
        double t1 = session.frames[i].t;
        if (t1 - t0 > max_gap) report.gaps.push_back({t0, t1});
    }
    return report;
}

bool session_order(const Session& a, const Session& b) {
    return std::tie(a.dataset_id, a.week, a.section_id, a.participant_id) <
           std::tie(b.dataset_id, b.week, b.section_id, b.participant_id);
}

}  // namespace motionid
