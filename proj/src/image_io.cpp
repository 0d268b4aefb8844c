// Copyright 2026 The hrcdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hrcdet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>
#include <vector>

#include "hrcdet/errors.hpp"

namespace hrcdet {

namespace {
struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;
}  // namespace

TensorGrid read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw FileError("cannot open image: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw FormatError("not a PNG file: " + path);
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("libpng init failed for: " + path);
    }

    std::vector<png_byte> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG: " + path);
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_strip_16(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("unsupported PNG channel count: " + path);
    }

    const size_t row_bytes = png_get_rowbytes(png, info);
    pixels.resize(row_bytes * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    TensorGrid img(channels, static_cast<int>(height), static_cast<int>(width));
    for (png_uint_32 y = 0; y < height; ++y) {
        const png_byte* row = pixels.data() + y * row_bytes;
        for (png_uint_32 x = 0; x < width; ++x) {
            for (int c = 0; c < channels; ++c) {
                img.at(c, static_cast<int>(y), static_cast<int>(x)) =
                    static_cast<float>(row[x * channels + c]) / 255.f;
            }
        }
    }
    return img;
}

void write_png(const std::string& path, const TensorGrid& image) {
    const int channels = image.channels();
    if (channels != 1 && channels != 3) {
        throw std::invalid_argument("write_png: image must have 1 or 3 channels");
    }

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw FileError("cannot write image: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw FileError("libpng init failed for: " + path);
    }

    const int h = image.height();
    const int w = image.width();
    std::vector<png_byte> pixels(static_cast<size_t>(h) * w * channels);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                const float v = std::clamp(image.at(c, y, x), 0.f, 1.f);
                pixels[(static_cast<size_t>(y) * w + x) * channels + c] =
                    static_cast<png_byte>(v * 255.f + 0.5f);
            }
        }
    }
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<size_t>(y) * w * channels;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FileError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, w, h, 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace hrcdet
