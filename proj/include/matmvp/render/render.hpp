// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "matmvp/core/image.hpp"
#include "matmvp/render/camera.hpp"
#include "matmvp/render/lighting.hpp"
#include "matmvp/render/material.hpp"
#include "matmvp/render/scene.hpp"

namespace matmvp::render {

// Geometry buffers for one view. Normals are remapped to [0,1] ((n+1)/2);
// positions are canonical coordinates in [0,1] relative to the [-1,1]^3 box.
// Masked-off pixels are 0 in every plane.
struct GeometryMaps {
    Image normal01;    // HxWx3
    Image position01;  // HxWx3
    Image mask;        // HxWx1
};

// A lit render together with everything that produced it.
struct RenderedView {
    Image rgb;  // HxWx3, tonemapped (clamped) linear radiance
    GeometryMaps geometry;
    CameraPose pose;
    LightingCondition lighting;
};

// Values allowed by the dataset protocol.
bool valid_resolution(int res);

GeometryMaps render_geometry(const SceneSpec& scene, const CameraPose& pose, int resolution);
MaterialMaps render_gt_maps(const SceneSpec& scene, const CameraPose& pose, int resolution);
RenderedView render_view(const SceneSpec& scene, const CameraPose& pose,
                         const LightingCondition& lighting, int resolution);

// Shades material maps under a lighting condition. This is the single shading
// path shared by render_view, so relight(render_gt_maps(s,p), geometry(s,p),
// p, L) reproduces render_view(s,p,L).rgb bit-identically.
Image relight(const MaterialMaps& maps, const GeometryMaps& geometry, const CameraPose& pose,
              const LightingCondition& lighting);

}  // namespace matmvp::render
