// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "matmvp/core/vec3.hpp"

namespace matmvp::render {

struct CameraPose {
    double elevation_deg = 0.0;  // [-90, 90]
    double azimuth_deg = 0.0;    // stored modulo 360
    double radius = 2.7;
    double fov_deg = 40.0;
};

inline double wrap_azimuth(double deg) {
    double a = std::fmod(deg, 360.0);
    if (a < 0.0) a += 360.0;
    return a;
}

inline CameraPose make_pose(double elev_deg, double azim_deg, double radius, double fov_deg) {
    return {elev_deg, wrap_azimuth(azim_deg), radius, fov_deg};
}

inline Vec3 camera_position(const CameraPose& pose) {
    return dir_from_angles(pose.elevation_deg, pose.azimuth_deg) * pose.radius;
}

// Pinhole camera looking at the origin, up = +Y (world-locked).
struct CameraFrame {
    Vec3 eye, right, up, forward;
    double tan_half_fov;

    explicit CameraFrame(const CameraPose& pose) {
        eye = camera_position(pose);
        forward = normalize(-eye);
        const Vec3 world_up{0, 1, 0};
        Vec3 r = cross(forward, world_up);
        if (length(r) < 1e-9) r = {1, 0, 0};  // looking straight up/down
        right = normalize(r);
        up = cross(right, forward);
        tan_half_fov = std::tan(deg2rad(pose.fov_deg) * 0.5);
    }

    // Ray through pixel center (x, y) of a res x res image.
    Vec3 ray_dir(int y, int x, int res) const {
        const double u = ((x + 0.5) / res * 2.0 - 1.0) * tan_half_fov;
        const double v = (1.0 - (y + 0.5) / res * 2.0) * tan_half_fov;
        return normalize(forward + right * u + up * v);
    }
};

// Circular distance between two azimuths in degrees, in [0, 180].
inline double azimuth_distance(double a_deg, double b_deg) {
    double d = std::fabs(wrap_azimuth(a_deg) - wrap_azimuth(b_deg));
    return d > 180.0 ? 360.0 - d : d;
}

}  // namespace matmvp::render
