#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "motionid/trace.hpp"

// Train/test partitions for the four experimental designs. Plans are pure
// data: session keys, roles, and time spans, serializable to JSON so any
// experiment can be replayed exactly.

namespace motionid {

struct SessionKey {
    std::string participant;
    int dataset = 1;
    int week = 1;
    std::string section;

    bool operator==(const SessionKey&) const = default;
    bool operator<(const SessionKey& o) const;
    std::string to_string() const;
};

struct SessionInfo {
    SessionKey key;
    double duration = 0.0;
};

SessionInfo session_info(const Session& s);

// Half-open span of session time, seconds.
struct TimeSpan {
    double start = 0.0;
    double end = 0.0;

    double length() const { return end - start; }
    bool contains(double t) const { return t >= start && t < end; }
    bool operator==(const TimeSpan&) const = default;
};

struct SessionAssignment {
    SessionKey key;
    bool excluded = false;
    std::string exclusion_reason;
    std::vector<TimeSpan> train_spans;
    std::vector<TimeSpan> test_spans;
    std::vector<TimeSpan> buffer_spans;

    bool is_train() const { return !excluded && !train_spans.empty(); }
    bool is_test() const { return !excluded && !test_spans.empty(); }
};

struct SplitPlan {
    std::string design;
    std::string params_text;
    uint64_t seed = 0;
    std::vector<SessionAssignment> sessions;

    const SessionAssignment* find(const SessionKey& key) const;
    std::string to_json() const;
    static SplitPlan from_json(const std::string& text, const std::string& source);
};

// Whole sessions by week: train weeks and test weeks disjoint; participants
// absent from every training week are excluded from testing.
SplitPlan between_split(const std::vector<SessionInfo>& sessions,
                        const std::set<int>& train_weeks = {1, 2, 3, 4, 5, 6},
                        const std::set<int>& test_weeks = {7, 8});

// The final (1 - train_fraction) of each session is the test span, preceded
// by a buffer; everything before that is training. Sessions shorter than
// min_session_s (or whose training span would vanish) are excluded.
SplitPlan within_split(const std::vector<SessionInfo>& sessions,
                       double train_fraction = 0.8, double buffer_s = 60.0,
                       double min_session_s = 300.0);

// The duration design: per participant, drop sessions under 8 minutes, pick
// up to n_sessions for training (one fewer than available when short), carve
// a random 5-minute test span with 1-minute buffers out of each, and allocate
// train_minutes around it: one contiguous block beside a buffer when a side
// fits it, else both flanks, capped by what the session holds. Sessions not
// picked stay as whole-session test units.
SplitPlan duration_sample(const std::vector<SessionInfo>& sessions, int n_sessions,
                          int train_minutes, uint64_t seed);

// All 56 ordered (train_week, test_week) single-week plans.
std::vector<SplitPlan> delay_pairs(const std::vector<SessionInfo>& sessions);

// Internal-consistency checks: disjoint spans, buffer separation, and test
// participants covered by training. Throws InternalError on violation.
void validate_plan(const SplitPlan& plan, double min_separation_s = 60.0);

}  // namespace motionid
