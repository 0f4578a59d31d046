// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#include "matmvp/render/render.hpp"

#include <cmath>

#include "matmvp/core/error.hpp"
#include "matmvp/render/brdf.hpp"

namespace matmvp::render {

namespace {

// One intersection pass filling geometry + material buffers.
struct ViewBuffers {
    GeometryMaps geom;
    MaterialMaps maps;
};

ViewBuffers trace(const SceneSpec& scene, const CameraPose& pose, int res) {
    ViewBuffers out;
    out.geom.normal01 = Image(res, res, 3);
    out.geom.position01 = Image(res, res, 3);
    out.geom.mask = Image(res, res, 1);
    out.maps.albedo_map = Image(res, res, 3);
    out.maps.mr_map = Image(res, res, 3);

    const CameraFrame cam(pose);
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            const Vec3 dir = cam.ray_dir(y, x, res);
            double t;
            Vec3 p, n;
            if (!intersect(scene, cam.eye, dir, t, p, n)) continue;
            out.geom.mask.at(y, x, 0) = 1.0;
            out.geom.normal01.set_rgb(y, x, (n + Vec3{1, 1, 1}) * 0.5);
            out.geom.position01.set_rgb(y, x, (p + Vec3{1, 1, 1}) * 0.5);
            const MaterialParams& m = material_at(scene, p);
            out.maps.albedo_map.set_rgb(y, x, clamp01(m.albedo));
            out.maps.mr_map.set_rgb(y, x, {0.0, clamp01(m.roughness), clamp01(m.metallic)});
        }
    }
    return out;
}

Vec3 decode_normal(const Vec3& n01) { return n01 * 2.0 - Vec3{1, 1, 1}; }
Vec3 decode_position(const Vec3& p01) { return p01 * 2.0 - Vec3{1, 1, 1}; }

}  // namespace

bool valid_resolution(int res) { return res == 32 || res == 64 || res == 128; }

GeometryMaps render_geometry(const SceneSpec& scene, const CameraPose& pose, int resolution) {
    require(valid_resolution(resolution), "resolution must be one of {32, 64, 128}");
    return trace(scene, pose, resolution).geom;
}

MaterialMaps render_gt_maps(const SceneSpec& scene, const CameraPose& pose, int resolution) {
    require(valid_resolution(resolution), "resolution must be one of {32, 64, 128}");
    return trace(scene, pose, resolution).maps;
}

Image relight(const MaterialMaps& maps, const GeometryMaps& geometry, const CameraPose& pose,
              const LightingCondition& lighting) {
    const Image& alb = maps.albedo_map;
    require(alb.c == 3 && maps.mr_map.c == 3, "relight: material maps must be HxWx3");
    require(alb.same_shape(maps.mr_map) && alb.h == geometry.normal01.h && alb.w == geometry.normal01.w &&
                alb.h == geometry.position01.h && alb.w == geometry.position01.w &&
                alb.h == geometry.mask.h && alb.w == geometry.mask.w,
            "relight: map/geometry resolution mismatch");

    const Vec3 eye = camera_position(pose);
    Image rgb(alb.h, alb.w, 3);
    for (int y = 0; y < alb.h; ++y) {
        for (int x = 0; x < alb.w; ++x) {
            if (geometry.mask.at(y, x, 0) == 0.0) continue;
            const Vec3 n = normalize(decode_normal(geometry.normal01.rgb(y, x)));
            const Vec3 p = decode_position(geometry.position01.rgb(y, x));
            const Vec3 v = normalize(eye - p);

            MaterialParams m;
            m.albedo = alb.rgb(y, x);
            m.roughness = maps.mr_map.at(y, x, 1);
            m.metallic = maps.mr_map.at(y, x, 2);

            Vec3 out{0, 0, 0};
            if (lighting.kind == LightingCondition::Kind::Point) {
                const Vec3 l =
                    dir_from_angles(lighting.theta_l_deg, pose.azimuth_deg + lighting.phi_l_deg);
                const Vec3 radiance{lighting.intensity, lighting.intensity, lighting.intensity};
                out = shade_brdf(m, n, v, l, radiance);
            } else {
                const EnvPreset& env = env_preset(lighting.env_id);
                out = shade_brdf(m, n, v, env.light_dir, env.radiance);
                out += env.ambient.cwise(clamp01(m.albedo));
            }
            // Tonemap: exposure 1.0, clamp.
            rgb.set_rgb(y, x, clamp01(out));
        }
    }
    return rgb;
}

RenderedView render_view(const SceneSpec& scene, const CameraPose& pose,
                         const LightingCondition& lighting, int resolution) {
    require(valid_resolution(resolution), "resolution must be one of {32, 64, 128}");
    ViewBuffers buf = trace(scene, pose, resolution);
    RenderedView view;
    view.rgb = relight(buf.maps, buf.geom, pose, lighting);
    view.geometry = std::move(buf.geom);
    view.pose = pose;
    view.lighting = lighting;
    return view;
}

}  // namespace matmvp::render
