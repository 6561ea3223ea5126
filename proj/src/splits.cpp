#include "motionid/splits.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

#include "motionid/errors.hpp"
#include "motionid/rng.hpp"
#include "motionid/util.hpp"

namespace motionid {

namespace {

constexpr double kDurationMinSessionS = 480.0;
constexpr double kDurationTestSpanS = 300.0;
constexpr double kDurationBufferS = 60.0;

std::string set_to_string(const std::set<int>& s) {
    std::string out;
    for (int v : s) {
        if (!out.empty()) out += ",";
        out += std::to_string(v);
    }
    return out;
}

void sort_assignments(SplitPlan& plan) {
    std::sort(plan.sessions.begin(), plan.sessions.end(),
              [](const SessionAssignment& a, const SessionAssignment& b) { return a.key < b.key; });
}

nlohmann::ordered_json spans_to_json(const std::vector<TimeSpan>& spans) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const TimeSpan& s : spans) arr.push_back({s.start, s.end});
    return arr;
}

std::vector<TimeSpan> spans_from_json(const nlohmann::json& arr) {
    std::vector<TimeSpan> out;
    for (const auto& pair : arr) {
        if (!pair.is_array() || pair.size() != 2) {
            throw DataError("span must be a [start, end] pair");
        }
        out.push_back({pair[0].get<double>(), pair[1].get<double>()});
    }
    return out;
}

}  // namespace

bool SessionKey::operator<(const SessionKey& o) const {
    return std::tie(dataset, week, section, participant) <
           std::tie(o.dataset, o.week, o.section, o.participant);
}

std::string SessionKey::to_string() const {
    return participant + "/d" + std::to_string(dataset) + "/w" + std::to_string(week) + "/" +
           section;
}

SessionInfo session_info(const Session& s) {
    return {{s.participant_id, s.dataset_id, s.week, s.section_id}, s.duration()};
}

const SessionAssignment* SplitPlan::find(const SessionKey& key) const {
    for (const SessionAssignment& a : sessions) {
        if (a.key == key) return &a;
    }
    return nullptr;
}

std::string SplitPlan::to_json() const {
    nlohmann::ordered_json doc;
    doc["design"] = design;
    doc["params"] = params_text;
    doc["seed"] = seed;
    doc["sessions"] = nlohmann::ordered_json::array();
    for (const SessionAssignment& a : sessions) {
        nlohmann::ordered_json s;
        s["participant"] = a.key.participant;
        s["dataset"] = a.key.dataset;
        s["week"] = a.key.week;
        s["section"] = a.key.section;
        s["excluded"] = a.excluded;
        s["reason"] = a.exclusion_reason;
        s["train"] = spans_to_json(a.train_spans);
        s["test"] = spans_to_json(a.test_spans);
        s["buffer"] = spans_to_json(a.buffer_spans);
        doc["sessions"].push_back(std::move(s));
    }
    return doc.dump(2) + "\n";
}

SplitPlan SplitPlan::from_json(const std::string& text, const std::string& source) {
    try {
        nlohmann::json doc = nlohmann::json::parse(text);
        SplitPlan plan;
        plan.design = doc.at("design").get<std::string>();
        plan.params_text = doc.at("params").get<std::string>();
        plan.seed = doc.at("seed").get<uint64_t>();
        for (const auto& s : doc.at("sessions")) {
            SessionAssignment a;
            a.key.participant = s.at("participant").get<std::string>();
            a.key.dataset = s.at("dataset").get<int>();
            a.key.week = s.at("week").get<int>();
            a.key.section = s.at("section").get<std::string>();
            a.excluded = s.at("excluded").get<bool>();
            a.exclusion_reason = s.at("reason").get<std::string>();
            a.train_spans = spans_from_json(s.at("train"));
            a.test_spans = spans_from_json(s.at("test"));
            a.buffer_spans = spans_from_json(s.at("buffer"));
            plan.sessions.push_back(std::move(a));
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(source + ": invalid split plan: " + e.what());
    }
}

SplitPlan between_split(const std::vector<SessionInfo>& sessions,
                        const std::set<int>& train_weeks, const std::set<int>& test_weeks) {
    for (int w : train_weeks) {
        if (test_weeks.count(w) != 0) {
            throw ConfigError("week " + std::to_string(w) + " is in both train and test sets");
        }
    }
    if (train_weeks.empty() || test_weeks.empty()) {
        throw ConfigError("between split needs non-empty train and test week sets");
    }

    std::set<std::string> trained;
    for (const SessionInfo& s : sessions) {
        if (train_weeks.count(s.key.week) != 0) trained.insert(s.key.participant);
    }

    SplitPlan plan;
    plan.design = "between";
    plan.params_text =
        "train_weeks=" + set_to_string(train_weeks) + ";test_weeks=" + set_to_string(test_weeks);
    for (const SessionInfo& s : sessions) {
        SessionAssignment a;
        a.key = s.key;
        if (train_weeks.count(s.key.week) != 0) {
            a.train_spans.push_back({0.0, s.duration});
        } else if (test_weeks.count(s.key.week) == 0) {
            a.excluded = true;
            a.exclusion_reason = "week not in design";
        } else if (trained.count(s.key.participant) == 0) {
            a.excluded = true;
            a.exclusion_reason = "participant has no training-week session";
        } else {
            a.test_spans.push_back({0.0, s.duration});
        }
        plan.sessions.push_back(std::move(a));
    }
    sort_assignments(plan);
    return plan;
}

SplitPlan within_split(const std::vector<SessionInfo>& sessions, double train_fraction,
                       double buffer_s, double min_session_s) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    if (buffer_s < 0.0) throw ConfigError("buffer_s must be non-negative");

    SplitPlan plan;
    plan.design = "within";
    plan.params_text = "train_fraction=" + format_double(train_fraction) +
                       ";buffer_s=" + format_double(buffer_s) +
                       ";min_session_s=" + format_double(min_session_s);
    for (const SessionInfo& s : sessions) {
        SessionAssignment a;
        a.key = s.key;
        double test_start = train_fraction * s.duration;
        double train_end = test_start - buffer_s;
        if (s.duration < min_session_s) {
            a.excluded = true;
            a.exclusion_reason = "session shorter than minimum";
        } else if (train_end <= 0.0) {
            a.excluded = true;
            a.exclusion_reason = "buffer leaves no training span";
        } else {
            a.train_spans.push_back({0.0, train_end});
            a.buffer_spans.push_back({train_end, test_start});
            a.test_spans.push_back({test_start, s.duration});
        }
        plan.sessions.push_back(std::move(a));
    }
    sort_assignments(plan);
    return plan;
}

SplitPlan duration_sample(const std::vector<SessionInfo>& sessions, int n_sessions,
                          int train_minutes, uint64_t seed) {
    if (n_sessions < 1) throw ConfigError("n_sessions must be at least 1");
    if (train_minutes < 1) throw ConfigError("train_minutes must be at least 1");

    std::map<std::string, std::vector<SessionInfo>> by_participant;
    for (const SessionInfo& s : sessions) by_participant[s.key.participant].push_back(s);

    SplitPlan plan;
    plan.design = "duration";
    plan.params_text = "n_sessions=" + std::to_string(n_sessions) +
                       ";train_minutes=" + std::to_string(train_minutes);
    plan.seed = seed;
    Rng root(seed);

    for (auto& [participant, infos] : by_participant) {
        std::sort(infos.begin(), infos.end(),
                  [](const SessionInfo& a, const SessionInfo& b) { return a.key < b.key; });

        std::vector<size_t> usable;
        for (size_t i = 0; i < infos.size(); ++i) {
            if (infos[i].duration >= kDurationMinSessionS) usable.push_back(i);
        }

        // One session must stay out of training so the between panel has a
        // test unit for this participant.
        size_t k = std::min<size_t>(n_sessions, usable.empty() ? 0 : usable.size() - 1);
        std::vector<bool> chosen(infos.size(), false);
        if (k > 0) {
            Rng pick = root.derive("duration-pick-" + participant);
            for (size_t i = 0; i < k; ++i) {
                size_t j = i + pick.next_below(usable.size() - i);
                std::swap(usable[i], usable[j]);
                chosen[usable[i]] = true;
            }
        }

        for (size_t i = 0; i < infos.size(); ++i) {
            const SessionInfo& s = infos[i];
            SessionAssignment a;
            a.key = s.key;
            if (s.duration < kDurationMinSessionS) {
                a.excluded = true;
                a.exclusion_reason = "session shorter than minimum";
            } else if (k == 0) {
                a.excluded = true;
                a.exclusion_reason = "participant lacks a second usable session";
            } else if (!chosen[i]) {
                a.test_spans.push_back({0.0, s.duration});
            } else {
                Rng place = root.derive("duration-place-" + s.key.to_string());
                double margin = kDurationTestSpanS + kDurationBufferS;
                double test_start = place.uniform(kDurationBufferS, s.duration - margin);
                double test_end = test_start + kDurationTestSpanS;
                a.test_spans.push_back({test_start, test_end});
                a.buffer_spans.push_back({test_start - kDurationBufferS, test_start});
                a.buffer_spans.push_back({test_end, test_end + kDurationBufferS});

                double requested = 60.0 * train_minutes;
                double left = test_start - kDurationBufferS;
                double right = s.duration - (test_end + kDurationBufferS);
                if (requested <= left) {
                    a.train_spans.push_back({left - requested, left});
                } else if (requested <= right) {
                    a.train_spans.push_back({test_end + kDurationBufferS,
                                             test_end + kDurationBufferS + requested});
                } else {
                    if (left > 0.0) a.train_spans.push_back({0.0, left});
                    double rest = std::min(right, requested - left);
                    if (rest > 0.0) {
                        a.train_spans.push_back(
                            {test_end + kDurationBufferS, test_end + kDurationBufferS + rest});
                    }
                }
            }
            plan.sessions.push_back(std::move(a));
        }
    }
    sort_assignments(plan);
    return plan;
}

std::vector<SplitPlan> delay_pairs(const std::vector<SessionInfo>& sessions) {
    std::set<int> weeks;
    for (const SessionInfo& s : sessions) weeks.insert(s.key.week);
    for (int w = 1; w <= 8; ++w) {
        if (weeks.count(w) == 0) {
            throw DataError("delay design needs sessions in every week 1-8, week " +
                            std::to_string(w) + " is empty");
        }
    }

    std::vector<SplitPlan> plans;
    for (int train_week = 1; train_week <= 8; ++train_week) {
        for (int test_week = 1; test_week <= 8; ++test_week) {
            if (train_week == test_week) continue;
            SplitPlan plan = between_split(sessions, {train_week}, {test_week});
            plan.design = "delay";
            plan.params_text = "train_week=" + std::to_string(train_week) +
                               ";test_week=" + std::to_string(test_week);
            plans.push_back(std::move(plan));
        }
    }
    return plans;
}

void validate_plan(const SplitPlan& plan, double min_separation_s) {
    std::set<std::string> train_participants;
    size_t n_train = 0;
    size_t n_test = 0;

    for (const SessionAssignment& a : plan.sessions) {
        if (a.excluded) {
            if (!a.train_spans.empty() || !a.test_spans.empty()) {
                throw InternalError("excluded session " + a.key.to_string() + " carries spans");
            }
            continue;
        }
        std::vector<TimeSpan> all = a.train_spans;
        all.insert(all.end(), a.test_spans.begin(), a.test_spans.end());
        all.insert(all.end(), a.buffer_spans.begin(), a.buffer_spans.end());
        for (const TimeSpan& s : all) {
            if (!(s.start >= 0.0) || !(s.end > s.start)) {
                throw InternalError("bad span in session " + a.key.to_string());
            }
        }
        for (size_t i = 0; i < all.size(); ++i) {
            for (size_t j = i + 1; j < all.size(); ++j) {
                if (all[i].start < all[j].end && all[j].start < all[i].end) {
                    throw InternalError("overlapping spans in session " + a.key.to_string());
                }
            }
        }
        for (const TimeSpan& tr : a.train_spans) {
            for (const TimeSpan& te : a.test_spans) {
                double gap = tr.end <= te.start ? te.start - tr.end : tr.start - te.end;
                // Spans built as "edge minus buffer" can round the gap a few
                // ulp under the nominal separation; that is not a leak.
                if (gap < min_separation_s - 1e-9) {
                    throw InternalError("train and test spans closer than buffer in session " +
                                        a.key.to_string());
                }
            }
        }
        if (a.is_train()) {
            train_participants.insert(a.key.participant);
            ++n_train;
        }
        if (a.is_test()) ++n_test;
    }

    if (n_train == 0) throw InternalError("plan has no training sessions");
    if (n_test == 0) throw InternalError("plan has no test sessions");
    for (const SessionAssignment& a : plan.sessions) {
        if (a.is_test() && train_participants.count(a.key.participant) == 0) {
            throw InternalError("test participant " + a.key.participant +
                                " absent from training");
        }
    }
}

}  // namespace motionid
