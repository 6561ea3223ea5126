#include "motionid/geom.hpp"

#include <algorithm>

namespace motionid {

Mat3 rotation_y(double degrees) {
    double c = std::cos(deg_to_rad(degrees));
    double s = std::sin(deg_to_rad(degrees));
    Mat3 r = Mat3::identity();
    r.m[0][0] = c;
    r.m[0][2] = s;
    r.m[2][0] = -s;
    r.m[2][2] = c;
    return r;
}

Mat3 rotation_x(double degrees) {
    double c = std::cos(deg_to_rad(degrees));
    double s = std::sin(deg_to_rad(degrees));
    Mat3 r = Mat3::identity();
    r.m[1][1] = c;
    r.m[1][2] = -s;
    r.m[2][1] = s;
    r.m[2][2] = c;
    return r;
}

Mat3 rotation_z(double degrees) {
    double c = std::cos(deg_to_rad(degrees));
    double s = std::sin(deg_to_rad(degrees));
    Mat3 r = Mat3::identity();
    r.m[0][0] = c;
    r.m[0][1] = -s;
    r.m[1][0] = s;
    r.m[1][1] = c;
    return r;
}

Mat3 euler_to_matrix(const Euler& e) {
    return rotation_y(e.yaw) * rotation_x(e.pitch) * rotation_z(e.roll);
}

Euler matrix_to_euler(const Mat3& r) {
    // With R = Ry * Rx * Rz the middle angle shows up as R[1][2] = -sin(pitch).
    double sp = std::clamp(-r.m[1][2], -1.0, 1.0);
    Euler e;
    e.pitch = rad_to_deg(std::asin(sp));
    double cp = std::sqrt(std::max(0.0, 1.0 - sp * sp));
    if (cp > 1e-9) {
        e.yaw = rad_to_deg(std::atan2(r.m[0][2], r.m[2][2]));
        e.roll = rad_to_deg(std::atan2(r.m[1][0], r.m[1][1]));
    } else {
        // Pitch at a pole: yaw and roll share an axis. Report roll as zero and
        // absorb the whole twist into yaw.
        e.yaw = rad_to_deg(std::atan2(sp * r.m[0][1], r.m[0][0]));
        e.roll = 0.0;
    }
    e.yaw = wrap_degrees(e.yaw);
    e.pitch = wrap_degrees(e.pitch);
    e.roll = wrap_degrees(e.roll);
    return e;
}

Vec3 forward_vector(const Euler& e) {
    return euler_to_matrix(e) * Vec3{0.0, 0.0, 1.0};
}

void compose_transform(const Vec3& parent_pos, const Euler& parent_rot,
                       const Vec3& child_pos, const Euler& child_rot,
                       Vec3& out_pos, Euler& out_rot) {
    Mat3 rp = euler_to_matrix(parent_rot);
    out_pos = rp * child_pos + parent_pos;
    out_rot = matrix_to_euler(rp * euler_to_matrix(child_rot));
}

double orthonormality_error(const Mat3& r) {
    Mat3 g = r.transposed() * r;
    double worst = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double want = (i == j) ? 1.0 : 0.0;
            worst = std::max(worst, std::abs(g.m[i][j] - want));
        }
    return worst;
}

}  // namespace motionid
