#include "motionid/body_space.hpp"

#include <cmath>

#include "motionid/errors.hpp"

namespace motionid {

Vec3 mean_forward(const Session& session, double frame_time, double half_window) {
    if (session.frames.empty()) throw DataError("mean_forward: empty session");
    Vec3 sum;
    size_t count = 0;
    for (const MotionFrame& f : session.frames) {
        if (std::abs(f.t - frame_time) > half_window) continue;
        Vec3 fwd = forward_vector(f.head.rotation);
        sum.x += fwd.x;
        sum.z += fwd.z;
        ++count;
    }
    if (count == 0) throw DataError("mean_forward: no frames in window");
    return {sum.x / count, 0.0, sum.z / count};
}

double heading_theta(const Vec3& v, double fallback_theta) {
    if (v.horizontal_norm() < kDegenerateForward) return fallback_theta;
    return std::atan2(v.x, v.z);
}

Mat3 bsc_rotation(double theta) {
    double c = std::cos(theta);
    double s = std::sin(theta);
    Mat3 r = Mat3::identity();
    r.m[0][0] = c;
    r.m[0][2] = -s;
    r.m[2][0] = s;
    r.m[2][2] = c;
    return r;
}

Vec3 to_body_space(const BscFrameContext& ctx, const Vec3& d) {
    const Mat3& r = ctx.bsc_rotation;
    return {r.m[0][0] * d.x + r.m[0][2] * d.z, d.y, r.m[2][0] * d.x + r.m[2][2] * d.z};
}

namespace {

BscFrameContext make_context(double t, double half_window, double theta) {
    BscFrameContext ctx;
    ctx.frame_time = t;
    ctx.half_window = half_window;
    ctx.heading_theta = theta;
    ctx.bsc_rotation = bsc_rotation(theta);
    return ctx;
}

}  // namespace

std::vector<BscFrameContext> bsc_contexts(const Session& session, double half_window) {
    const auto& frames = session.frames;
    size_t n = frames.size();
    std::vector<BscFrameContext> out;
    out.reserve(n);

    // Prefix sums of the projected forward components; the windowed sum is a
    // difference of two prefixes, so cost is O(1) per frame and there is no
    // cancellation drift from repeated add/remove.
    std::vector<double> px(n + 1, 0.0), pz(n + 1, 0.0);
    for (size_t i = 0; i < n; ++i) {
        Vec3 fwd = forward_vector(frames[i].head.rotation);
        px[i + 1] = px[i] + fwd.x;
        pz[i + 1] = pz[i] + fwd.z;
    }

    size_t lo = 0, hi = 0;  // window is [lo, hi)
    double prev_theta = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double t = frames[i].t;
        // Same comparisons, in the same floating-point form, as the reference
        // path's |t' - t| <= half_window test, so boundary frames never differ.
        while (lo < n && t - frames[lo].t > half_window) ++lo;
        while (hi < n && frames[hi].t - t <= half_window) ++hi;
        size_t count = hi - lo;
        Vec3 v{(px[hi] - px[lo]) / count, 0.0, (pz[hi] - pz[lo]) / count};
        double theta = heading_theta(v, prev_theta);
        out.push_back(make_context(t, half_window, theta));
        prev_theta = theta;
    }
    return out;
}

std::vector<BscFrameContext> bsc_contexts_reference(const Session& session,
                                                    double half_window) {
    std::vector<BscFrameContext> out;
    out.reserve(session.frames.size());
    double prev_theta = 0.0;
    for (const MotionFrame& f : session.frames) {
        Vec3 v = mean_forward(session, f.t, half_window);
        double theta = heading_theta(v, prev_theta);
        out.push_back(make_context(f.t, half_window, theta));
        prev_theta = theta;
    }
    return out;
}

}  // namespace motionid
