// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#include "matmvp/render/brdf.hpp"

#include <cmath>

#include "matmvp/core/error.hpp"

namespace matmvp::render {

namespace {

constexpr double kPi = 3.14159265358979323846;

double pow5(double x) {
    const double x2 = x * x;
    return x2 * x2 * x;
}

}  // namespace

Vec3 brdf_eval(const MaterialParams& mat, const Vec3& n, const Vec3& v, const Vec3& l) {
    const MaterialParams m = mat.clamped();
    const double rough = m.roughness < kRoughnessFloor ? kRoughnessFloor : m.roughness;
    const double alpha = rough * rough;

    const Vec3 diffuse = m.albedo * ((1.0 - m.metallic) / kPi);

    const double ndotl = dot(n, l);
    const double ndotv = dot(n, v);
    if (ndotl <= 0.0 || ndotv <= 0.0) return diffuse;

    // All specular inputs are computed from l<->v symmetric expressions on
    // canonically ordered operands (min/max), so the swapped call runs the
    // exact same instruction stream: reciprocity holds bitwise even under
    // FMA contraction.
    const double d0 = std::min(ndotl, ndotv);
    const double d1 = std::max(ndotl, ndotv);

    // Half-vector quantities via s = v + l, |s| = len.
    const Vec3 s = v + l;
    const double len = std::sqrt(dot(s, s));
    if (len < 1e-12) return diffuse;
    const double ndoth = (d0 + d1) / len;            // n.h
    const double coshv = (1.0 + dot(v, l)) / len;    // h.v == h.l

    // GGX normal distribution.
    const double a2 = alpha * alpha;
    const double dd = ndoth * ndoth * (a2 - 1.0) + 1.0;
    const double D = a2 / (kPi * dd * dd);

    // Height-correlated Smith visibility (G / (4 n.l n.v)).
    const double s0 = std::sqrt(d0 * d0 * (1.0 - a2) + a2);
    const double s1 = std::sqrt(d1 * d1 * (1.0 - a2) + a2);
    const double vis = 0.5 / (d0 * s1 + d1 * s0);

    // Schlick Fresnel with F0 = mix(0.04, albedo, metallic). The grazing
    // reflectance f90 collapses to 0 together with F0, so a black metal
    // reflects nothing; any dielectric (F0 >= 0.04) keeps f90 = 1.
    const Vec3 f0 = Vec3{0.04, 0.04, 0.04} * (1.0 - m.metallic) + m.albedo * m.metallic;
    const double f90 = clamp01(16.5 * (f0.x + f0.y + f0.z));
    const double fw = pow5(1.0 - coshv);
    const Vec3 F = f0 * (1.0 - fw) + Vec3{f90, f90, f90} * fw;

    return diffuse + F * (D * vis);
}

Vec3 shade_brdf(const MaterialParams& mat, const Vec3& n, const Vec3& v, const Vec3& l,
                const Vec3& radiance_in) {
    for (const Vec3* u : {&n, &v, &l}) {
        if (std::abs(length(*u) - 1.0) > 1e-3)
            throw InvalidArgumentError("shade_brdf: direction vectors must be unit length");
    }
    const double ndotl = dot(n, l);
    if (ndotl <= 0.0) return {0.0, 0.0, 0.0};
    return brdf_eval(mat, n, v, l).cwise(radiance_in) * ndotl;
}

}  // namespace matmvp::render
