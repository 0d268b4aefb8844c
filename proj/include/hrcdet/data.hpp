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

#pragma once

#include <random>
#include <string>
#include <vector>

#include "hrcdet/core.hpp"

namespace hrcdet {

/// Character-level annotation for one page image.
struct PageAnnotation {
    std::string image_path;
    int width = 0;
    int height = 0;
    std::vector<BBox> boxes;
};

/// A page image together with its annotation.
struct LabeledPage {
    TensorGrid image;
    PageAnnotation annotation;
};

enum class Background { kPlain, kParchment };

/// Synthetic page generator settings. Glyphs are procedural multi-stroke
/// ink blobs laid out in top-down, right-to-left vertical columns.
struct SynthConfig {
    int page_w = 128;
    int page_h = 128;
    int columns_min = 2, columns_max = 4;
    int chars_min = 4, chars_max = 8;      ///< per column
    float glyph_min = 10.f, glyph_max = 22.f;  ///< base glyph size, pixels
    float size_jitter = 0.2f;              ///< per-axis size variation fraction
    float noise_level = 0.f;               ///< 0 = clean; adds speckle, then blur above 0.5
    Background background = Background::kPlain;
    uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument
};

/// Renders one page. Deterministic given the config (including seed).
/// Each annotation box tightly bounds its glyph's rendered extent.
/// Throws std::invalid_argument when the config cannot place any glyph.
LabeledPage generate_page(const SynthConfig& cfg);

/// Line-delimited annotation file: one JSON object per line,
/// {"image": path, "width": W, "height": H, "boxes": [[x0,y0,x1,y1],...]}.
/// Malformed lines raise FormatError naming the line number; boxes that are
/// inverted or fall outside the image raise FormatError naming the image.
std::vector<PageAnnotation> load_annotations(const std::string& path);
void save_annotations(const std::string& path, const std::vector<PageAnnotation>& pages);

/// Adapter from a directory of per-page character-level annotation files
/// (one "<page>.txt" per page, each line "x_min y_min x_max y_max [text]",
/// comma or whitespace separated, with an optional sibling "<page>.png"
/// supplying image dims). Out-of-range boxes are clamped and counted.
struct ImportResult {
    std::vector<PageAnnotation> pages;
    int clamped_boxes = 0;
};
ImportResult import_mthv2(const std::string& dir);

/// Random crop for training augmentation. Boxes keeping less than 25% of
/// their area inside the window are dropped; the rest are clamped to it.
/// Crop dims must divide by 32 and fit in the image.
LabeledPage random_crop(const TensorGrid& image, const PageAnnotation& ann,
                        int crop_w, int crop_h, std::mt19937_64& rng);

/// Tensor file format "HRTG": magic, u16 version, u8 dtype (1 = float32),
/// u8 rank, dims u32 LE, payload row-major float32 LE, trailing CRC32 of
/// the payload. Bit-exact roundtrip.
void write_tensor(const std::string& path, const TensorGrid& grid);
TensorGrid read_tensor(const std::string& path);

}  // namespace hrcdet
