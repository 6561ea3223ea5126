#pragma once

#include <vector>

#include "motionid/geom.hpp"
#include "motionid/trace.hpp"

// Body-space coordinates: a per-frame frame of reference whose vertical axis
// is the world Y axis and whose forward axis follows the windowed mean of the
// head's horizontal forward direction. Expressing inter-device displacements
// in this frame removes the arbitrary global yaw and position of each session.

namespace motionid {

// Horizontal magnitudes below this give no usable heading.
constexpr double kDegenerateForward = 1e-6;

struct BscFrameContext {
    double frame_time = 0.0;
    double half_window = 3.0;
    double heading_theta = 0.0;  // radians
    Mat3 bsc_rotation = Mat3::identity();
};

// Mean over frames within |t - frame_time| <= half_window of the horizontal
// projection (Y zeroed) of the head forward vector. The window clips at
// session boundaries. Direct scan over all frames; the reference path.
Vec3 mean_forward(const Session& session, double frame_time, double half_window);

// atan2(v_x, v_z), or fallback_theta when the horizontal magnitude is
// degenerate. The session-level context chain supplies the previous frame's
// heading as the fallback, 0 at session start.
double heading_theta(const Vec3& v, double fallback_theta = 0.0);

// Rotation about Y by -theta: maps the mean forward direction onto +Z.
Mat3 bsc_rotation(double theta);

// R_bsc applied to a world displacement. The Y component passes through
// bit-identically (the rotation axis is vertical).
Vec3 to_body_space(const BscFrameContext& ctx, const Vec3& world_displacement);

// Contexts for every frame. Incremental evaluation: one pass with prefix sums
// of the projected forward vectors, O(1) per frame after the pass.
std::vector<BscFrameContext> bsc_contexts(const Session& session,
                                          double half_window = 3.0);

// Same result computed the slow way (mean_forward per frame). Kept as the
// testing and benchmarking reference for the incremental path.
std::vector<BscFrameContext> bsc_contexts_reference(const Session& session,
                                                    double half_window = 3.0);

}  // namespace motionid
