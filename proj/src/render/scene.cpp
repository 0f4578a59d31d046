// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#include "matmvp/render/scene.hpp"

#include <algorithm>
#include <cmath>

#include "matmvp/core/error.hpp"
#include "matmvp/core/rng.hpp"

namespace matmvp::render {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

SceneSpec make_scene(uint64_t seed) {
    Rng rng(derive_seed(seed, "scene"));
    SceneSpec s;
    s.seed = seed;
    s.primitive = static_cast<PrimitiveKind>(rng.uniform_index(3));
    s.pattern = static_cast<PatternKind>(rng.uniform_index(3));
    s.pattern_freq = 1.0 + static_cast<double>(rng.uniform_index(3));  // 1..3
    s.pattern_offset = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};

    switch (s.primitive) {
        case PrimitiveKind::Sphere:
            s.dims = {rng.uniform(0.75, 0.95), 0, 0};
            break;
        case PrimitiveKind::Box:
            s.dims = {rng.uniform(0.5, 0.8), rng.uniform(0.45, 0.75), rng.uniform(0.5, 0.8)};
            break;
        case PrimitiveKind::Capsule:
            s.dims = {rng.uniform(0.35, 0.55), rng.uniform(0.3, 0.42), 0};
            break;
    }

    const int n_regions = 2 + static_cast<int>(rng.uniform_index(3));  // 2..4
    s.regions.resize(n_regions);
    for (int i = 0; i < n_regions; ++i) {
        MaterialParams& m = s.regions[i];
        m.albedo = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
        m.roughness = rng.uniform(0.08, 0.95);
        m.metallic = rng.uniform(0.0, 1.0);
    }
    // Guarantee MR signal: region 0 metallic, region 1 dielectric, and keep
    // their roughness well separated so region edges show in the G channel.
    s.regions[0].metallic = rng.uniform(0.65, 1.0);
    s.regions[1].metallic = rng.uniform(0.0, 0.35);
    s.regions[0].roughness = rng.uniform(0.08, 0.4);
    s.regions[1].roughness = rng.uniform(0.55, 0.95);
    return s;
}

int region_at(const SceneSpec& scene, const Vec3& p) {
    const int n = static_cast<int>(scene.regions.size());
    const double f = scene.pattern_freq;
    const Vec3 q = p + scene.pattern_offset;
    int64_t idx = 0;
    switch (scene.pattern) {
        case PatternKind::Checker:
            idx = static_cast<int64_t>(std::floor(q.x * f)) + static_cast<int64_t>(std::floor(q.y * f)) +
                  static_cast<int64_t>(std::floor(q.z * f));
            break;
        case PatternKind::Bands:
            idx = static_cast<int64_t>(std::floor((q.y + 1.0) * f * 1.5));
            break;
        case PatternKind::Sectors: {
            const double a = std::atan2(p.z, p.x) + kPi + scene.pattern_offset.x;
            idx = static_cast<int64_t>(std::floor(a / (2.0 * kPi) * (2.0 * n + f)));
            break;
        }
    }
    idx %= n;
    if (idx < 0) idx += n;
    return static_cast<int>(idx);
}

const MaterialParams& material_at(const SceneSpec& scene, const Vec3& p) {
    return scene.regions[static_cast<size_t>(region_at(scene, p))];
}

namespace {

bool intersect_sphere(double radius, const Vec3& o, const Vec3& d, double& t) {
    const double b = dot(o, d);
    const double c = dot(o, o) - radius * radius;
    const double disc = b * b - c;
    if (disc < 0.0) return false;
    const double sq = std::sqrt(disc);
    double t0 = -b - sq;
    if (t0 < 1e-6) t0 = -b + sq;
    if (t0 < 1e-6) return false;
    t = t0;
    return true;
}

bool intersect_box(const Vec3& he, const Vec3& o, const Vec3& d, double& t, Vec3& n) {
    double tmin = -1e30, tmax = 1e30;
    int axis = 0;
    const double ov[3] = {o.x, o.y, o.z};
    const double dv[3] = {d.x, d.y, d.z};
    const double hv[3] = {he.x, he.y, he.z};
    for (int i = 0; i < 3; ++i) {
        if (std::abs(dv[i]) < 1e-12) {
            if (std::abs(ov[i]) > hv[i]) return false;
            continue;
        }
        double t0 = (-hv[i] - ov[i]) / dv[i];
        double t1 = (hv[i] - ov[i]) / dv[i];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > tmin) {
            tmin = t0;
            axis = i;
        }
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return false;
    }
    if (tmin < 1e-6) return false;  // camera stays outside the scene
    t = tmin;
    const Vec3 p = o + d * t;
    n = {0, 0, 0};
    const double pv[3] = {p.x, p.y, p.z};
    double* nv[3] = {&n.x, &n.y, &n.z};
    *nv[axis] = pv[axis] > 0.0 ? 1.0 : -1.0;
    return true;
}

// Capsule of radius r, cylindrical core |y| <= hh, axis +Y.
bool intersect_capsule(double r, double hh, const Vec3& o, const Vec3& d, double& t, Vec3& n) {
    double best = 1e30;
    // Side: x^2 + z^2 = r^2, |y| <= hh.
    const double a = d.x * d.x + d.z * d.z;
    if (a > 1e-12) {
        const double b = o.x * d.x + o.z * d.z;
        const double c = o.x * o.x + o.z * o.z - r * r;
        const double disc = b * b - a * c;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            for (double tc : {(-b - sq) / a, (-b + sq) / a}) {
                if (tc > 1e-6 && tc < best) {
                    const double y = o.y + d.y * tc;
                    if (std::abs(y) <= hh) best = tc;
                }
            }
        }
    }
    // Caps: spheres at (0, +-hh, 0).
    for (double cy : {hh, -hh}) {
        const Vec3 oc = o - Vec3{0, cy, 0};
        double tc;
        if (intersect_sphere(r, oc, d, tc) && tc < best) {
            const double y = o.y + d.y * tc;
            if ((cy > 0 && y >= hh) || (cy < 0 && y <= -hh)) best = tc;
        }
    }
    if (best >= 1e30) return false;
    t = best;
    const Vec3 p = o + d * t;
    if (p.y > hh)
        n = normalize(p - Vec3{0, hh, 0});
    else if (p.y < -hh)
        n = normalize(p - Vec3{0, -hh, 0});
    else
        n = normalize(Vec3{p.x, 0, p.z});
    return true;
}

}  // namespace

bool intersect(const SceneSpec& scene, const Vec3& origin, const Vec3& dir, double& t_hit,
               Vec3& pos, Vec3& normal) {
    bool hit = false;
    switch (scene.primitive) {
        case PrimitiveKind::Sphere:
            hit = intersect_sphere(scene.dims.x, origin, dir, t_hit);
            if (hit) {
                pos = origin + dir * t_hit;
                normal = normalize(pos);
            }
            return hit;
        case PrimitiveKind::Box:
            hit = intersect_box(scene.dims, origin, dir, t_hit, normal);
            if (hit) pos = origin + dir * t_hit;
            return hit;
        case PrimitiveKind::Capsule:
            hit = intersect_capsule(scene.dims.x, scene.dims.y, origin, dir, t_hit, normal);
            if (hit) pos = origin + dir * t_hit;
            return hit;
    }
    throw InvalidArgumentError("intersect: unknown primitive kind");
}

}  // namespace matmvp::render
