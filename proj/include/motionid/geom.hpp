#pragma once

#include <array>
#include <cmath>

// Small fixed-size linear algebra for pose math. Left-handed frame,
// Y up, Z forward, X to the right. Angles in degrees at the API surface.

namespace motionid {

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * (kPi / 180.0); }
inline double rad_to_deg(double r) { return r * (180.0 / kPi); }

// Wraps an angle in degrees to [-180, 180).
inline double wrap_degrees(double d) {
    double w = std::fmod(d + 180.0, 360.0);
    if (w < 0.0) w += 360.0;
    return w - 180.0;
}

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x; y += o.y; z += o.z;
        return *this;
    }
    Vec3& operator-=(const Vec3& o) {
        x -= o.x; y -= o.y; z -= o.z;
        return *this;
    }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    double horizontal_norm() const { return std::sqrt(x * x + z * z); }
};

// Row-major 3x3 matrix.
struct Mat3 {
    std::array<std::array<double, 3>, 3> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m[0][0] = r.m[1][1] = r.m[2][2] = 1.0;
        return r;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
                m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
                m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += m[i][k] * o.m[k][j];
                r.m[i][j] = s;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
        return r;
    }
};

// Euler angles as stored in traces: yaw about Y, pitch about X, roll about Z,
// intrinsic and applied in that order. Positive yaw turns the forward axis
// toward +X, positive pitch tilts it toward -Y, positive roll tips the head
// toward the right shoulder.
struct Euler {
    double yaw = 0.0, pitch = 0.0, roll = 0.0;
};

Mat3 rotation_y(double degrees);
Mat3 rotation_x(double degrees);
Mat3 rotation_z(double degrees);

// Ry(yaw) * Rx(pitch) * Rz(roll).
Mat3 euler_to_matrix(const Euler& e);

// Inverse of euler_to_matrix. Output angles lie in [-180, 180) and pitch in
// [-90, 90]. At the pitch poles roll is folded into yaw and reported as zero.
Euler matrix_to_euler(const Mat3& r);

// Unit forward vector (rotated +Z) for the given orientation.
Vec3 forward_vector(const Euler& e);

// World pose of a child given its parent-space pose and the parent's world
// pose: p_world = R_parent * p_child + t_parent, R_world = R_parent * R_child.
void compose_transform(const Vec3& parent_pos, const Euler& parent_rot,
                       const Vec3& child_pos, const Euler& child_rot,
                       Vec3& out_pos, Euler& out_rot);

// Max absolute deviation of R^T R from the identity.
double orthonormality_error(const Mat3& r);

}  // namespace motionid
