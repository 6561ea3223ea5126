#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "motionid/geom.hpp"
#include "motionid/trace.hpp"

// Seeded synthetic cohorts with controllable identifiability structure. The
// generator makes no claim of human realism: it is a test instrument whose
// knobs (session noise, weekly drift, spawn randomization) produce the
// effects the experiments measure. Motion is a superposition of band-limited
// sinusoids, so traces are exactly reproducible everywhere.

namespace motionid {

// The biometric latent: everything that stays with a participant. Per-week
// and per-session perturbations move these numbers, never the structure.
struct ParticipantProfile {
    double height = 1.7;          // head rest height, meters
    double arm_span = 1.7;        // scales lateral hand offsets
    Vec3 rest_left, rest_right;   // hand rest offsets in body space
    double bob_amplitude = 0.02;  // head bob, meters
    double bob_frequency = 1.9;   // head bob, Hz
    double gesture_rate = 6.0;    // gestures per minute
    double sway_amplitude = 0.05; // idle sway, meters
    double turn_rate = 25.0;      // heading slew preference, deg/s

    std::array<double, 13> as_vector() const;
};

// Normalized Euclidean distance over profile parameters, each scaled by its
// population spread so no single field dominates.
double profile_distance(const ParticipantProfile& a, const ParticipantProfile& b);

struct CohortSpec {
    int n_participants = 30;
    int weeks = 8;
    int sessions_per_week = 1;
    double session_minutes = 10.0;
    double hz = 30.0;
    double session_noise = 0.25;  // per-session re-draw scale, in population SDs
    double weekly_drift = 0.35;   // weekly random-walk step, in population SDs
    bool spawn_randomization = true;
    uint64_t seed = 1;

    void validate() const;
    int n_sessions() const { return n_participants * weeks * sessions_per_week; }
};

class Rng;

// Population draw for one participant.
ParticipantProfile sample_profile(Rng rng);

// The participant's profile as it stands in a given week: base profile plus
// w-1 random-walk steps of scale weekly_drift.
ParticipantProfile week_profile(const ParticipantProfile& base, Rng drift_rng, int week,
                                double weekly_drift);

// One fully deterministic session; (spec.seed, participant, week, section)
// fix every byte. participant is 0-based, week and section 1-based.
Session generate_session(const CohortSpec& spec, int participant, int week, int section);

// All sessions of the cohort, ordered by participant, week, section.
std::vector<Session> generate_cohort(const CohortSpec& spec);

// Writes one JSONL trace per session into out_dir (created if missing),
// named like p03_w5_s1.jsonl. Returns the file paths in order.
std::vector<std::string> write_cohort(const CohortSpec& spec, const std::string& out_dir);

std::string synth_participant_id(int participant);

}  // namespace motionid
