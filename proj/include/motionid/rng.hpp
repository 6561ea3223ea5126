#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

// Deterministic random streams. Every consumer derives its own stream from a
// root seed plus a label, so adding a new consumer never shifts the numbers an
// existing one sees, and results do not depend on thread count or standard
// library internals (std::*_distribution is implementation defined, so all
// sampling is done by hand here).

namespace motionid {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a, used only to fold stream labels into seed material.
inline uint64_t hash_label(std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // Warm up so that small, correlated seeds diverge immediately.
        splitmix64(state_);
        splitmix64(state_);
    }

    // Child stream for an independent consumer.
    Rng derive(std::string_view label) const {
        uint64_t s = state_;
        return Rng(splitmix64(s) ^ hash_label(label));
    }

    // Numbered variant for per-item streams (per tree, per session, ...).
    Rng derive(std::string_view label, uint64_t index) const {
        uint64_t s = state_ ^ (0x9e3779b97f4a7c15ULL * (index + 1));
        return Rng(splitmix64(s) ^ hash_label(label));
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, bound), Lemire's method.
    uint64_t next_below(uint64_t bound) {
        if (bound == 0) return 0;
        while (true) {
            uint64_t x = next_u64();
            __uint128_t m = static_cast<__uint128_t>(x) * bound;
            uint64_t lo = static_cast<uint64_t>(m);
            if (lo >= bound) return static_cast<uint64_t>(m >> 64);
            uint64_t threshold = (0 - bound) % bound;
            if (lo >= threshold) return static_cast<uint64_t>(m >> 64);
        }
    }

    // Standard normal via Box-Muller. One value per call; the twin is dropped
    // to keep the stream position independent of call parity.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kRngPi * u2);
    }

    double normal(double mean, double sd) { return mean + sd * next_normal(); }

  private:
    static constexpr double kRngPi = 3.14159265358979323846;
    uint64_t state_;
};

}  // namespace motionid
