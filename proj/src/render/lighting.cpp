// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#include "matmvp/render/lighting.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>

#include "matmvp/core/error.hpp"

namespace matmvp::render {

LightingCondition LightingCondition::point(double theta_deg, double phi_deg, double intensity) {
    require(intensity >= 0.0, "point light intensity must be >= 0");
    LightingCondition l;
    l.kind = Kind::Point;
    l.theta_l_deg = theta_deg;
    l.phi_l_deg = phi_deg;
    l.intensity = intensity;
    l.env_id = 0;
    return l;
}

LightingCondition LightingCondition::env(int id) {
    require(id >= 0 && id < env_preset_count(), "env preset id out of range");
    LightingCondition l;
    l.kind = Kind::Env;
    l.env_id = id;
    return l;
}

std::string LightingCondition::tag() const {
    char buf[64];
    if (kind == Kind::Env) {
        std::snprintf(buf, sizeof(buf), "env%d", env_id);
    } else {
        std::snprintf(buf, sizeof(buf), "pt_%g_%g", theta_l_deg, phi_l_deg);
    }
    return buf;
}

LightingCondition LightingCondition::from_tag(const std::string& tag) {
    if (tag.rfind("env", 0) == 0) {
        return env(std::atoi(tag.c_str() + 3));
    }
    if (tag.rfind("pt_", 0) == 0) {
        double theta = 0.0, phi = 0.0;
        if (std::sscanf(tag.c_str(), "pt_%lf_%lf", &theta, &phi) == 2)
            return point(theta, phi, 3.0);
    }
    throw InvalidArgumentError("unrecognized lighting tag: " + tag);
}

namespace {

// Three fixed HDR stand-ins: a directional light plus constant ambient, with
// clearly different directions and tints so reference lighting actually
// varies across presets.
const std::array<EnvPreset, 3> kEnvPresets = {{
    {dir_from_angles(35.0, 40.0), {2.6, 2.3, 1.9}, {0.11, 0.12, 0.16}},
    {dir_from_angles(15.0, 200.0), {1.7, 2.0, 2.6}, {0.16, 0.13, 0.11}},
    {dir_from_angles(65.0, 310.0), {2.9, 2.8, 2.6}, {0.08, 0.08, 0.09}},
}};

}  // namespace

int env_preset_count() { return static_cast<int>(kEnvPresets.size()); }

const EnvPreset& env_preset(int id) {
    require(id >= 0 && id < env_preset_count(), "env preset id out of range");
    return kEnvPresets[static_cast<size_t>(id)];
}

}  // namespace matmvp::render
