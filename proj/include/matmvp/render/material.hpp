// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "matmvp/core/image.hpp"
#include "matmvp/core/vec3.hpp"

namespace matmvp::render {

// Roughness floor; keeps the GGX distribution away from its delta limit.
inline constexpr double kRoughnessFloor = 0.04;

struct MaterialParams {
    Vec3 albedo{0.5, 0.5, 0.5};
    double metallic = 0.0;
    double roughness = 0.5;

    MaterialParams clamped() const {
        MaterialParams m;
        m.albedo = matmvp::clamp01(albedo);
        m.metallic = matmvp::clamp01(metallic);
        m.roughness = matmvp::clamp01(roughness);
        return m;
    }
};

// Per-view ground-truth or predicted material maps.
// mr_map channel layout: R = 0, G = roughness, B = metallic.
struct MaterialMaps {
    Image albedo_map;  // HxWx3
    Image mr_map;      // HxWx3
};

}  // namespace matmvp::render
