#include <doctest.h>

#include <cmath>
#include <cstring>

#include "motionid/body_space.hpp"
#include "motionid/rng.hpp"

using namespace motionid;

namespace {

Session yaw_session(int n_frames, double dt, double (*yaw_at)(int)) {
    Session s;
    s.participant_id = "P001";
    s.section_id = "S01";
    for (int i = 0; i < n_frames; ++i) {
        MotionFrame f;
        f.t = i * dt;
        f.head = {{0.0, 1.7, 0.0}, {yaw_at(i), 0.0, 0.0}};
        s.frames.push_back(f);
    }
    return s;
}

Session random_walk_session(uint64_t seed, int n_frames) {
    Rng rng(seed);
    Session s;
    s.participant_id = "P001";
    s.section_id = "S01";
    double yaw = rng.uniform(-180, 180);
    for (int i = 0; i < n_frames; ++i) {
        MotionFrame f;
        f.t = i / 30.0;
        yaw = wrap_degrees(yaw + rng.normal(0.0, 2.0));
        f.head = {{rng.normal(0, 0.1), 1.7 + rng.normal(0, 0.02), rng.normal(0, 0.1)},
                  {yaw, rng.normal(0, 15.0), rng.normal(0, 5.0)}};
        f.left = {{rng.normal(-0.3, 0.1), 1.2, rng.normal(0.2, 0.1)}, {0, 0, 0}};
        f.right = {{rng.normal(0.3, 0.1), 1.2, rng.normal(0.2, 0.1)}, {0, 0, 0}};
        s.frames.push_back(f);
    }
    return s;
}

}  // namespace

TEST_CASE("mean_forward on constant headings") {
    Session ahead = yaw_session(300, 1.0 / 30.0, [](int) { return 0.0; });
    Vec3 v = mean_forward(ahead, 5.0, 3.0);
    CHECK(std::abs(v.x) < 1e-12);
    CHECK(std::abs(v.z - 1.0) < 1e-12);

    Session sideways = yaw_session(300, 1.0 / 30.0, [](int) { return 90.0; });
    v = mean_forward(sideways, 5.0, 3.0);
    CHECK(std::abs(v.x - 1.0) < 1e-12);
    CHECK(std::abs(v.z) < 1e-12);
}

TEST_CASE("mean_forward with alternating yaw and equal dwell") {
    Session s = yaw_session(100, 0.1, [](int i) { return i % 2 == 0 ? 45.0 : -45.0; });
    // Window [2.95, 6.95] holds frames at 3.0..6.9: twenty of each sign.
    Vec3 v = mean_forward(s, 4.95, 2.0);
    CHECK(std::abs(v.x) < 1e-9);
    CHECK(std::abs(v.z - std::cos(deg_to_rad(45.0))) < 1e-9);
}

TEST_CASE("heading_theta axis cases and fallback") {
    CHECK(heading_theta({0, 0, 1}) == doctest::Approx(0.0));
    CHECK(heading_theta({1, 0, 0}) == doctest::Approx(kPi / 2));
    CHECK(heading_theta({0, 5, 0}, 1.25) == doctest::Approx(1.25));
    CHECK(heading_theta({1e-9, 3, 1e-9}, -0.5) == doctest::Approx(-0.5));
}

TEST_CASE("bsc_rotation matches its defining entries") {
    Mat3 id = bsc_rotation(0.0);
    CHECK(orthonormality_error(id) < 1e-15);
    CHECK(id.m[0][0] == doctest::Approx(1.0));

    // theta = pi/2 sends (1,0,0) to (0,0,1).
    Vec3 v = bsc_rotation(kPi / 2) * Vec3{1, 0, 0};
    CHECK(std::abs(v.x) < 1e-12);
    CHECK(std::abs(v.z - 1.0) < 1e-12);

    Rng rng(606);
    for (int i = 0; i < 10000; ++i) {
        double theta = rng.uniform(-10.0, 10.0);
        Mat3 r = bsc_rotation(theta);
        CHECK(orthonormality_error(r) < 1e-9);
        Vec3 up = r * Vec3{0, 1, 0};
        CHECK(up.x == 0.0);
        CHECK(up.y == 1.0);
        CHECK(up.z == 0.0);
    }
}

TEST_CASE("rotating the mean forward by its own heading lands on +Z") {
    Rng rng(707);
    for (int i = 0; i < 2000; ++i) {
        Vec3 v{rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(-2, 2)};
        if (v.horizontal_norm() < kDegenerateForward) continue;
        Vec3 r = bsc_rotation(heading_theta(v)) * v;
        CHECK(std::abs(r.x) < 1e-9);
        CHECK(r.z >= 0.0);
    }
}

TEST_CASE("vertical component passes through bit-identically") {
    Rng rng(808);
    for (int i = 0; i < 1000; ++i) {
        BscFrameContext ctx;
        ctx.heading_theta = rng.uniform(-kPi, kPi);
        ctx.bsc_rotation = bsc_rotation(ctx.heading_theta);
        double y = rng.uniform(-2, 2);
        Vec3 d{rng.uniform(-2, 2), y, rng.uniform(-2, 2)};
        Vec3 b = to_body_space(ctx, d);
        CHECK(std::memcmp(&b.y, &y, sizeof(double)) == 0);
    }
    // Identity context leaves displacements alone.
    BscFrameContext id;
    Vec3 b = to_body_space(id, {0.3, -0.4, 0.5});
    CHECK(b.x == doctest::Approx(0.3));
    CHECK(b.y == doctest::Approx(-0.4));
    CHECK(b.z == doctest::Approx(0.5));
}

TEST_CASE("incremental contexts match the direct reference") {
    Session s = random_walk_session(112233, 3000);
    auto fast = bsc_contexts(s, 3.0);
    auto ref = bsc_contexts_reference(s, 3.0);
    REQUIRE(fast.size() == ref.size());
    for (size_t i = 0; i < fast.size(); ++i) {
        CHECK(std::abs(fast[i].heading_theta - ref[i].heading_theta) < 1e-9);
    }
}

TEST_CASE("degenerate forward holds the previous heading") {
    // Looking straight down for the whole session: no heading at all, theta 0.
    Session down = yaw_session(200, 1.0 / 30.0, [](int) { return 0.0; });
    for (auto& f : down.frames) f.head.rotation = {0.0, 90.0, 0.0};
    for (const auto& ctx : bsc_contexts(down, 3.0))
        CHECK(ctx.heading_theta == 0.0);

    // Valid heading early, then straight down: the last heading holds.
    Session mixed = yaw_session(600, 1.0 / 30.0, [](int) { return 30.0; });
    for (size_t i = 300; i < mixed.frames.size(); ++i)
        mixed.frames[i].head.rotation = {0.0, 90.0, 0.0};
    auto ctxs = bsc_contexts(mixed, 3.0);
    double held = ctxs[250].heading_theta;
    CHECK(std::abs(held - deg_to_rad(30.0)) < 1e-9);
    // Well past the switch plus window reach, the heading must be held.
    CHECK(ctxs.back().heading_theta == ctxs[450].heading_theta);
}

TEST_CASE("body-space displacements ignore global yaw and translation") {
    Session s = random_walk_session(445566, 1200);
    Session moved = s;
    Mat3 spin = rotation_y(137.0);
    Vec3 shift{3.2, 0.0, -1.7};
    for (auto& f : moved.frames) {
        for (Pose* pose : {&f.head, &f.left, &f.right}) {
            pose->position = spin * pose->position + shift;
            pose->rotation = matrix_to_euler(spin * euler_to_matrix(pose->rotation));
        }
    }
    auto ctx_a = bsc_contexts(s, 3.0);
    auto ctx_b = bsc_contexts(moved, 3.0);
    for (size_t i = 0; i < s.frames.size(); ++i) {
        Vec3 da = s.frames[i].head.position - s.frames[i].left.position;
        Vec3 db = moved.frames[i].head.position - moved.frames[i].left.position;
        Vec3 ba = to_body_space(ctx_a[i], da);
        Vec3 bb = to_body_space(ctx_b[i], db);
        CHECK(std::abs(ba.x - bb.x) < 1e-9);
        CHECK(std::abs(ba.y - bb.y) < 1e-9);
        CHECK(std::abs(ba.z - bb.z) < 1e-9);
    }
}
