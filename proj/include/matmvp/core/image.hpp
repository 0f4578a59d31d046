// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matmvp/core/vec3.hpp"

namespace matmvp {

// Interleaved row-major image, doubles in [0,1] unless stated otherwise.
struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), px(static_cast<size_t>(h_) * w_ * c_, 0.0) {}

    double& at(int y, int x, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }

    Vec3 rgb(int y, int x) const {
        const size_t i = (static_cast<size_t>(y) * w + x) * c;
        return {px[i], px[i + 1], px[i + 2]};
    }
    void set_rgb(int y, int x, const Vec3& v) {
        const size_t i = (static_cast<size_t>(y) * w + x) * c;
        px[i] = v.x;
        px[i + 1] = v.y;
        px[i + 2] = v.z;
    }

    bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
    size_t size() const { return px.size(); }
};

// 8-bit PNG I/O (RGB for c==3, grayscale for c==1). Values are quantized with
// round-to-nearest on write and mapped back to v/255 on read.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Raw float32 maps, header: magic "MMVP", u32 H, u32 W, u32 C, little-endian.
void write_f32(const std::string& path, const Image& img);
Image read_f32(const std::string& path);

// Quantize to the 8-bit grid in place (what a PNG round trip preserves).
Image quantize8(const Image& img);
// Cast through float32 in place (what an f32 round trip preserves).
Image quantize_f32(const Image& img);

uint32_t crc32_of_file(const std::string& path);

}  // namespace matmvp
