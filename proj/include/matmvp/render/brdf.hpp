// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "matmvp/core/vec3.hpp"
#include "matmvp/render/material.hpp"

namespace matmvp::render {

// Metallic-roughness microfacet BRDF:
//   diffuse  = (1 - metallic) * albedo / pi
//   specular = D_ggx * Vis_smith_height_correlated * F_schlick
// with F0 = mix(0.04, albedo, metallic) and alpha = roughness^2.
//
// The specular term is written so that swapping l and v evaluates the exact
// same floating-point expressions: N.H and the Fresnel cosine are computed
// from (n.v + n.l)/|v+l| and (1 + v.l)/|v+l|. Helmholtz reciprocity therefore
// holds bitwise, not just analytically.

// Full BRDF value (no cosine, no incident radiance). Zero specular whenever
// either side is below the horizon.
Vec3 brdf_eval(const MaterialParams& mat, const Vec3& n, const Vec3& v, const Vec3& l);

// Outgoing radiance: brdf_eval * max(n.l, 0) * radiance_in.
// Throws InvalidArgumentError if n, v or l deviates from unit length by more
// than 1e-3.
Vec3 shade_brdf(const MaterialParams& mat, const Vec3& n, const Vec3& v, const Vec3& l,
                const Vec3& radiance_in);

}  // namespace matmvp::render
