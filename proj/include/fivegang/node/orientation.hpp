#pragma once

#include <array>
#include <cmath>

#include "fivegang/errors.hpp"
#include "fivegang/node/signal.hpp"

namespace fivegang::node {

/// Unit quaternion (w, x, y, z) rotating body-frame vectors into the world
/// frame (x north, y west, z up).
struct Orientation
{
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Orientation normalized() const
    {
        const double n = norm();
        return {w / n, x / n, y / n, z / n};
    }

    friend Orientation operator*(const Orientation& a, const Orientation& b)
    {
        return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
                a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
    }

    double dot(const Orientation& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }

    static Orientation from_axis_angle(std::array<double, 3> axis, double angle)
    {
        const double n = std::hypot(axis[0], axis[1], axis[2]);
        if (n == 0.0)
            return {};
        const double s = std::sin(angle / 2.0) / n;
        return {std::cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s};
    }

    double yaw() const { return std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)); }

    /// Rotates a body-frame vector into the world frame.
    std::array<double, 3> rotate(const std::array<double, 3>& v) const
    {
        const Orientation p{0.0, v[0], v[1], v[2]};
        const Orientation r = (*this) * p * Orientation{w, -x, -y, -z};
        return {r.x, r.y, r.z};
    }
};

/// Rotation angle between two orientations, in radians.
inline double angle_between(const Orientation& a, const Orientation& b)
{
    const double d = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
    return 2.0 * std::acos(d);
}

inline Orientation slerp(Orientation a, Orientation b, double t)
{
    double d = a.dot(b);
    if (d < 0.0) {
        b = {-b.w, -b.x, -b.y, -b.z};
        d = -d;
    }
    double wa = 1.0 - t, wb = t;
    if (d < 0.9995) {
        const double theta = std::acos(d);
        const double s = std::sin(theta);
        wa = std::sin((1.0 - t) * theta) / s;
        wb = std::sin(t * theta) / s;
    }
    return Orientation{wa * a.w + wb * b.w, wa * a.x + wb * b.x, wa * a.y + wb * b.y, wa * a.z + wb * b.z}
        .normalized();
}

namespace detail {

inline std::array<double, 3> cross(const std::array<double, 3>& a, const std::array<double, 3>& b)
{
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

inline double length(const std::array<double, 3>& v) { return std::hypot(v[0], v[1], v[2]); }

} // namespace detail

/// Absolute orientation from the gravity reaction (accel) and the magnetic
/// field direction. Throws DegenerateReference when they are parallel.
inline Orientation absolute_orientation(const std::array<double, 3>& accel, const std::array<double, 3>& mag)
{
    const double an = detail::length(accel);
    const double mn = detail::length(mag);
    if (an == 0.0 || mn == 0.0)
        throw DegenerateReference("zero-length accel or mag vector");
    const std::array<double, 3> zb{accel[0] / an, accel[1] / an, accel[2] / an};
    const std::array<double, 3> mu{mag[0] / mn, mag[1] / mn, mag[2] / mn};
    auto yb = detail::cross(zb, mu);
    const double yn = detail::length(yb);
    if (yn < 1e-9)
        throw DegenerateReference("accel and mag are parallel");
    for (auto& v : yb)
        v /= yn;
    const auto xb = detail::cross(yb, zb);

    // Rows of the body-to-world matrix are the world axes seen from the body.
    const double r00 = xb[0], r01 = xb[1], r02 = xb[2];
    const double r10 = yb[0], r11 = yb[1], r12 = yb[2];
    const double r20 = zb[0], r21 = zb[1], r22 = zb[2];
    const double tr = r00 + r11 + r22;
    Orientation q;
    if (tr > 0.0) {
        const double s = std::sqrt(tr + 1.0) * 2.0;
        q = {0.25 * s, (r21 - r12) / s, (r02 - r20) / s, (r10 - r01) / s};
    } else if (r00 > r11 && r00 > r22) {
        const double s = std::sqrt(1.0 + r00 - r11 - r22) * 2.0;
        q = {(r21 - r12) / s, 0.25 * s, (r01 + r10) / s, (r02 + r20) / s};
    } else if (r11 > r22) {
        const double s = std::sqrt(1.0 + r11 - r00 - r22) * 2.0;
        q = {(r02 - r20) / s, (r01 + r10) / s, 0.25 * s, (r12 + r21) / s};
    } else {
        const double s = std::sqrt(1.0 + r22 - r00 - r11) * 2.0;
        q = {(r10 - r01) / s, (r02 + r20) / s, (r12 + r21) / s, 0.25 * s};
    }
    return q.normalized();
}

/// Complementary filter: integrate the body rates over dt, then slerp
/// towards the accel/mag estimate by (1 - alpha).
inline Orientation fuse_orientation(const Orientation& prev, const SensorFrame& frame, double dt_s, double alpha)
{
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("alpha must lie in [0, 1]");
    if (!(dt_s > 0.0))
        throw std::invalid_argument("dt must be positive");
    const double rate = detail::length(frame.gyro);
    const Orientation gyro_step = (prev * Orientation::from_axis_angle(frame.gyro, rate * dt_s)).normalized();
    if (alpha == 1.0)
        return gyro_step;
    const Orientation abs = absolute_orientation(frame.accel, frame.mag);
    return slerp(abs, gyro_step, alpha);
}

} // namespace fivegang::node
