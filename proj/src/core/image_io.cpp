// Copyright 2026 The matmvp Authors
// SPDX-License-Identifier: Apache-2.0

#include <png.h>
#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "matmvp/core/error.hpp"
#include "matmvp/core/image.hpp"

namespace matmvp {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint8_t to_u8(double v) {
    const double q = std::nearbyint(clamp01(v) * 255.0);
    return static_cast<uint8_t>(q);
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
    require(img.c == 1 || img.c == 3, "write_png: channel count must be 1 or 3");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataIntegrityError("write_png: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataIntegrityError("write_png: libpng failure for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.w, img.h, 8,
                 img.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<uint8_t> row(static_cast<size_t>(img.w) * img.c);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < img.c; ++ch) row[static_cast<size_t>(x) * img.c + ch] = to_u8(img.at(y, x, ch));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataIntegrityError("read_png: cannot open " + path);

    uint8_t sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw DataIntegrityError("read_png: not a PNG: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataIntegrityError("read_png: libpng failure for " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth != 8 || (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_GRAY)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataIntegrityError("read_png: unsupported PNG format: " + path);
    }
    const int c = color == PNG_COLOR_TYPE_RGB ? 3 : 1;

    Image img(h, w, c);
    std::vector<uint8_t> row(static_cast<size_t>(w) * c);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                img.at(y, x, ch) = static_cast<double>(row[static_cast<size_t>(x) * c + ch]) / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_f32(const std::string& path, const Image& img) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataIntegrityError("write_f32: cannot open " + path);
    const char magic[4] = {'M', 'M', 'V', 'P'};
    const uint32_t dims[3] = {static_cast<uint32_t>(img.h), static_cast<uint32_t>(img.w),
                              static_cast<uint32_t>(img.c)};
    std::vector<float> data(img.px.begin(), img.px.end());
    if (std::fwrite(magic, 1, 4, fp.get()) != 4 || std::fwrite(dims, 4, 3, fp.get()) != 3 ||
        std::fwrite(data.data(), 4, data.size(), fp.get()) != data.size())
        throw DataIntegrityError("write_f32: short write to " + path);
}

Image read_f32(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataIntegrityError("read_f32: cannot open " + path);
    char magic[4];
    uint32_t dims[3];
    if (std::fread(magic, 1, 4, fp.get()) != 4 || std::memcmp(magic, "MMVP", 4) != 0)
        throw DataIntegrityError("read_f32: bad magic in " + path);
    if (std::fread(dims, 4, 3, fp.get()) != 3) throw DataIntegrityError("read_f32: truncated header in " + path);
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 || dims[0] > 1u << 16 || dims[1] > 1u << 16 || dims[2] > 16)
        throw DataIntegrityError("read_f32: implausible dimensions in " + path);
    Image img(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]));
    std::vector<float> data(img.size());
    if (std::fread(data.data(), 4, data.size(), fp.get()) != data.size())
        throw DataIntegrityError("read_f32: truncated payload in " + path);
    for (size_t i = 0; i < data.size(); ++i) img.px[i] = static_cast<double>(data[i]);
    return img;
}

Image quantize8(const Image& img) {
    Image out = img;
    for (auto& v : out.px) v = static_cast<double>(to_u8(v)) / 255.0;
    return out;
}

Image quantize_f32(const Image& img) {
    Image out = img;
    for (auto& v : out.px) v = static_cast<double>(static_cast<float>(v));
    return out;
}

uint32_t crc32_of_file(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataIntegrityError("crc32: cannot open " + path);
    uLong crc = crc32(0L, Z_NULL, 0);
    uint8_t buf[1 << 15];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), fp.get())) > 0) crc = crc32(crc, buf, static_cast<uInt>(n));
    return static_cast<uint32_t>(crc);
}

}  // namespace matmvp
