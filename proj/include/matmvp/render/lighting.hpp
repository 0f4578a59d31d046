// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "matmvp/core/vec3.hpp"

namespace matmvp::render {

// Either a point light (directional at desk scale: elevation/azimuth +
// intensity, azimuth relative to the camera azimuth) or one of the fixed
// environment presets (world-locked directional light + constant ambient).
struct LightingCondition {
    enum class Kind { Point, Env };
    Kind kind = Kind::Env;
    double theta_l_deg = 0.0;  // point light elevation
    double phi_l_deg = 0.0;    // point light azimuth, camera-relative
    double intensity = 3.0;    // point light radiance scale, >= 0
    int env_id = 0;

    static LightingCondition point(double theta_deg, double phi_deg, double intensity);
    static LightingCondition env(int id);

    // e.g. "env0", "pt_-30_45" (used in dataset file names).
    std::string tag() const;
    static LightingCondition from_tag(const std::string& tag);
};

struct EnvPreset {
    Vec3 light_dir;  // unit, toward the light
    Vec3 radiance;
    Vec3 ambient;
};

int env_preset_count();
const EnvPreset& env_preset(int id);

}  // namespace matmvp::render
