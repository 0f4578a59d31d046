// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "matmvp/core/vec3.hpp"
#include "matmvp/render/material.hpp"

namespace matmvp::render {

enum class PrimitiveKind { Sphere, Box, Capsule };

enum class PatternKind { Checker, Bands, Sectors };

// Procedural scene: one analytic primitive centered at the origin, fitting
// inside the canonical box [-1,1]^3, with >= 2 material regions assigned by a
// deterministic pattern over object-space position. Region 0 is always
// metallic (> 0.5) and region 1 always dielectric (< 0.5).
struct SceneSpec {
    uint64_t seed = 0;
    PrimitiveKind primitive = PrimitiveKind::Sphere;
    PatternKind pattern = PatternKind::Checker;
    double pattern_freq = 2.0;
    Vec3 pattern_offset{0, 0, 0};
    // Sphere: dims.x = radius. Box: dims = half extents. Capsule: dims.x =
    // radius, dims.y = half height of the cylindrical core (axis +Y).
    Vec3 dims{0.9, 0.9, 0.9};
    std::vector<MaterialParams> regions;
};

SceneSpec make_scene(uint64_t seed);

// Region index / material at an object-space point.
int region_at(const SceneSpec& scene, const Vec3& p);
const MaterialParams& material_at(const SceneSpec& scene, const Vec3& p);

// Ray-primitive intersection. Returns false on miss; otherwise fills the hit
// distance along the (unit) ray direction, position and outward unit normal.
bool intersect(const SceneSpec& scene, const Vec3& origin, const Vec3& dir, double& t_hit,
               Vec3& pos, Vec3& normal);

}  // namespace matmvp::render
