// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

namespace matmvp {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    // Component-wise product (colors).
    Vec3 cwise(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double length(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 normalize(const Vec3& a) { return a / length(a); }

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline Vec3 clamp01(const Vec3& v) { return {clamp01(v.x), clamp01(v.y), clamp01(v.z)}; }

inline double deg2rad(double d) { return d * 0.017453292519943295; }

// Unit direction from elevation/azimuth in degrees; elevation from the XZ
// plane toward +Y, azimuth around +Y starting at +X toward +Z.
inline Vec3 dir_from_angles(double elev_deg, double azim_deg) {
    const double e = deg2rad(elev_deg);
    const double a = deg2rad(azim_deg);
    return {std::cos(e) * std::cos(a), std::sin(e), std::cos(e) * std::sin(a)};
}

}  // namespace matmvp
