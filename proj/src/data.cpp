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

#include "hrcdet/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binio.hpp"
#include "hrcdet/errors.hpp"
#include "hrcdet/image_io.hpp"
#include "hrcdet/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hrcdet {

void SynthConfig::validate() const {
    if (page_w <= 0 || page_h <= 0) throw std::invalid_argument("synth: page dims must be positive");
    if (columns_min < 1 || columns_max < columns_min)
        throw std::invalid_argument("synth: columns range is empty");
    if (chars_min < 1 || chars_max < chars_min)
        throw std::invalid_argument("synth: chars_per_column range is empty");
    if (!(glyph_min > 0.f) || glyph_max < glyph_min)
        throw std::invalid_argument("synth: glyph_size range is empty");
    if (size_jitter < 0.f || size_jitter >= 1.f)
        throw std::invalid_argument("synth: size_jitter must be in [0,1)");
    if (noise_level < 0.f || noise_level > 1.f)
        throw std::invalid_argument("synth: noise_level must be in [0,1]");
}

namespace {

struct GlyphPainter {
    TensorGrid& img;
    // inked extent, inclusive pixel indices
    int x_lo = 1 << 30, y_lo = 1 << 30, x_hi = -1, y_hi = -1;
    // cell bounds, inclusive
    int cx0, cy0, cx1, cy1;

    void ink(int x, int y, float v) {
        if (x < cx0 || x > cx1 || y < cy0 || y > cy1) return;
        if (x < 0 || x >= img.width() || y < 0 || y >= img.height()) return;
        float& px = img.at(0, y, x);
        px = std::min(px, v);
        x_lo = std::min(x_lo, x);
        x_hi = std::max(x_hi, x);
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
    }

    void hline(int x0, int x1, int y, int thick, float v) {
        for (int t = 0; t < thick; ++t)
            for (int x = x0; x <= x1; ++x) ink(x, y + t, v);
    }
    void vline(int y0, int y1, int x, int thick, float v) {
        for (int t = 0; t < thick; ++t)
            for (int y = y0; y <= y1; ++y) ink(x + t, y, v);
    }
    void diag(int x0, int y0, int x1, int y1, int thick, float v) {
        const int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
        for (int s = 0; s <= steps; ++s) {
            const int x = x0 + (x1 - x0) * s / std::max(1, steps);
            const int y = y0 + (y1 - y0) * s / std::max(1, steps);
            for (int t = 0; t < thick; ++t) ink(x + t, y, v);
        }
    }
};

// One procedural glyph: a frame-giving horizontal and vertical stroke plus
// a few random strokes, confined to the cell. Returns the tight corner box
// of the inked pixels, or nullopt when nothing was drawn.
std::optional<BBox> draw_glyph(TensorGrid& img, Rng& rng, int cell_x, int cell_y,
                               int cell_w, int cell_h) {
    GlyphPainter p{img, 1 << 30, 1 << 30, -1, -1,
                   cell_x, cell_y, cell_x + cell_w - 1, cell_y + cell_h - 1};
    const int thick = std::max(1, static_cast<int>(std::lround(std::min(cell_w, cell_h) / 9.0)));
    auto ink_shade = [&] { return static_cast<float>(rng.uniform(0.05, 0.3)); };

    // spanning strokes keep the glyph's extent close to the cell
    const int hy = cell_y + rng.uniform_int(0, std::max(0, cell_h - thick));
    p.hline(cell_x, cell_x + cell_w - 1, hy, thick, ink_shade());
    const int vx = cell_x + rng.uniform_int(0, std::max(0, cell_w - thick));
    p.vline(cell_y, cell_y + cell_h - 1, vx, thick, ink_shade());

    const int extra = rng.uniform_int(1, 5);
    for (int s = 0; s < extra; ++s) {
        const int kind = rng.uniform_int(0, 2);
        const float v = ink_shade();
        if (kind == 0) {
            const int y = cell_y + rng.uniform_int(0, std::max(0, cell_h - thick));
            const int x0 = cell_x + rng.uniform_int(0, cell_w / 2);
            const int x1 = x0 + rng.uniform_int(cell_w / 4, cell_w - 1);
            p.hline(x0, std::min(x1, cell_x + cell_w - 1), y, thick, v);
        } else if (kind == 1) {
            const int x = cell_x + rng.uniform_int(0, std::max(0, cell_w - thick));
            const int y0 = cell_y + rng.uniform_int(0, cell_h / 2);
            const int y1 = y0 + rng.uniform_int(cell_h / 4, cell_h - 1);
            p.vline(y0, std::min(y1, cell_y + cell_h - 1), x, thick, v);
        } else {
            const int x0 = cell_x + rng.uniform_int(0, cell_w - 1);
            const int y0 = cell_y + rng.uniform_int(0, cell_h - 1);
            const int x1 = cell_x + rng.uniform_int(0, cell_w - 1);
            const int y1 = cell_y + rng.uniform_int(0, cell_h - 1);
            p.diag(x0, y0, x1, y1, thick, v);
        }
    }

    if (p.x_hi < 0) return std::nullopt;
    // pixel (y, x) covers [x, x+1) x [y, y+1)
    return from_corners(p.x_lo, p.y_lo, p.x_hi + 1, p.y_hi + 1);
}

void paint_background(TensorGrid& img, Background bg, Rng& rng) {
    if (bg == Background::kPlain) {
        std::fill(img.buffer().begin(), img.buffer().end(), 0.92f);
        return;
    }
    // parchment: smooth low-frequency shading over a warm base
    const int gw = 9, gh = 9;
    std::vector<double> coarse(gw * gh);
    for (double& v : coarse) v = rng.uniform(-0.05, 0.05);
    for (int y = 0; y < img.height(); ++y) {
        const double fy = static_cast<double>(y) / img.height() * (gh - 1);
        const int y0 = static_cast<int>(fy);
        const double ty = fy - y0;
        for (int x = 0; x < img.width(); ++x) {
            const double fx = static_cast<double>(x) / img.width() * (gw - 1);
            const int x0 = static_cast<int>(fx);
            const double tx = fx - x0;
            const double a = coarse[y0 * gw + x0];
            const double b = coarse[y0 * gw + std::min(x0 + 1, gw - 1)];
            const double c = coarse[std::min(y0 + 1, gh - 1) * gw + x0];
            const double d = coarse[std::min(y0 + 1, gh - 1) * gw + std::min(x0 + 1, gw - 1)];
            const double v = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
            img.at(0, y, x) = static_cast<float>(0.88 + v);
        }
    }
}

void apply_noise(TensorGrid& img, float level, Rng& rng) {
    if (level <= 0.f) return;
    for (float& v : img.buffer()) {
        v = static_cast<float>(v + rng.normal() * 0.15 * level);
        if (rng.uniform() < 0.01 * level) v = static_cast<float>(rng.uniform(0.0, 0.6));
        v = std::clamp(v, 0.f, 1.f);
    }
    if (level >= 0.5f) {
        // one 3x3 box-blur pass
        TensorGrid src = img;
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                double acc = 0;
                int cnt = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy < 0 || yy >= img.height() || xx < 0 || xx >= img.width()) continue;
                        acc += src.at(0, yy, xx);
                        ++cnt;
                    }
                }
                img.at(0, y, x) = static_cast<float>(acc / cnt);
            }
        }
    }
}

}  // namespace

LabeledPage generate_page(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    LabeledPage page;
    page.image = TensorGrid(1, cfg.page_h, cfg.page_w);
    page.annotation.width = cfg.page_w;
    page.annotation.height = cfg.page_h;
    paint_background(page.image, cfg.background, rng);

    const int margin = 4;
    const int ncols = rng.uniform_int(cfg.columns_min, cfg.columns_max);
    const double pitch = static_cast<double>(cfg.page_w - 2 * margin) / ncols;

    for (int col = 0; col < ncols; ++col) {
        // columns run right to left
        const double center_x = cfg.page_w - margin - (col + 0.5) * pitch;
        const int nchars = rng.uniform_int(cfg.chars_min, cfg.chars_max);
        int cursor_y = margin + rng.uniform_int(0, 3);
        for (int ch = 0; ch < nchars; ++ch) {
            const double base = rng.uniform(cfg.glyph_min, cfg.glyph_max);
            double gw = base * (1.0 + cfg.size_jitter * (2.0 * rng.uniform() - 1.0));
            double gh = base * (1.0 + cfg.size_jitter * (2.0 * rng.uniform() - 1.0));
            gw = std::clamp(gw, 3.0, std::max(3.0, pitch - 3.0));
            gh = std::max(gh, 3.0);
            const int cw = static_cast<int>(std::lround(gw));
            const int chh = static_cast<int>(std::lround(gh));
            if (cursor_y + chh > cfg.page_h - margin) break;
            const int cell_x = static_cast<int>(std::lround(center_x - cw / 2.0));
            if (auto box = draw_glyph(page.image, rng, cell_x, cursor_y, cw, chh)) {
                page.annotation.boxes.push_back(*box);
            }
            cursor_y += chh + 2 + rng.uniform_int(0, 4);
        }
    }

    if (page.annotation.boxes.empty()) {
        throw std::invalid_argument("generate_page: config yields zero glyphs");
    }
    apply_noise(page.image, cfg.noise_level, rng);
    return page;
}

// ---------------------------------------------------------------------------
// Annotation files

std::vector<PageAnnotation> load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot open annotations: " + path);

    std::vector<PageAnnotation> pages;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError("annotations line " + std::to_string(lineno) + ": " + e.what());
        }
        PageAnnotation page;
        try {
            page.image_path = j.at("image").get<std::string>();
            page.width = j.at("width").get<int>();
            page.height = j.at("height").get<int>();
            for (const auto& arr : j.at("boxes")) {
                if (!arr.is_array() || arr.size() != 4) {
                    throw FormatError("annotations line " + std::to_string(lineno) +
                                      ": box must be [x_min,y_min,x_max,y_max]");
                }
                const double x0 = arr[0].get<double>();
                const double y0 = arr[1].get<double>();
                const double x1 = arr[2].get<double>();
                const double y1 = arr[3].get<double>();
                if (!(x0 < x1) || !(y0 < y1)) {
                    throw FormatError("annotations line " + std::to_string(lineno) +
                                      ": box has non-positive width or height");
                }
                if (x0 < 0 || y0 < 0 || x1 > page.width || y1 > page.height) {
                    throw FormatError("image " + page.image_path + ": box out of bounds");
                }
                page.boxes.push_back(from_corners(x0, y0, x1, y1));
            }
        } catch (const json::exception& e) {
            throw FormatError("annotations line " + std::to_string(lineno) + ": " + e.what());
        }
        if (page.width <= 0 || page.height <= 0) {
            throw FormatError("annotations line " + std::to_string(lineno) +
                              ": width/height must be positive");
        }
        pages.push_back(std::move(page));
    }
    return pages;
}

void save_annotations(const std::string& path, const std::vector<PageAnnotation>& pages) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FileError("cannot write annotations: " + path);
    for (const PageAnnotation& page : pages) {
        json boxes = json::array();
        for (const BBox& b : page.boxes) {
            const Corners c = to_corners(b);
            boxes.push_back({c.x_min, c.y_min, c.x_max, c.y_max});
        }
        json j{{"image", page.image_path},
               {"width", page.width},
               {"height", page.height},
               {"boxes", boxes}};
        out << j.dump() << "\n";
    }
    if (!out) throw FileError("short write on annotations: " + path);
}

ImportResult import_mthv2(const std::string& dir) {
    if (!fs::is_directory(dir)) throw FileError("not a directory: " + dir);

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".txt") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    ImportResult result;
    for (const fs::path& file : files) {
        std::ifstream in(file);
        if (!in) throw FileError("cannot open annotation file: " + file.string());

        PageAnnotation page;
        std::vector<std::array<double, 4>> corners;
        std::string line;
        int lineno = 0;
        double max_x = 0, max_y = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ss(line);
            std::array<double, 4> c{};
            if (!(ss >> c[0] >> c[1] >> c[2] >> c[3])) {
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                throw FormatError("unparseable annotation file: " + file.string() + " (line " +
                                  std::to_string(lineno) + ")");
            }
            corners.push_back(c);
            max_x = std::max(max_x, c[2]);
            max_y = std::max(max_y, c[3]);
        }

        const fs::path image = fs::path(file).replace_extension(".png");
        if (fs::exists(image)) {
            const TensorGrid img = read_png(image.string());
            page.width = img.width();
            page.height = img.height();
            page.image_path = image.string();
        } else {
            page.width = static_cast<int>(std::ceil(max_x));
            page.height = static_cast<int>(std::ceil(max_y));
            page.image_path = image.string();
        }

        for (const auto& c : corners) {
            BBox raw;
            try {
                raw = from_corners(c[0], c[1], c[2], c[3]);
            } catch (const std::invalid_argument&) {
                throw FormatError("unparseable annotation file: " + file.string() +
                                  " (degenerate box)");
            }
            auto clamped = clamp_to_image(raw, page.width, page.height);
            if (!clamped) {
                ++result.clamped_boxes;  // fully outside: dropped
                continue;
            }
            if (iou(*clamped, raw) < 1.0) ++result.clamped_boxes;
            page.boxes.push_back(*clamped);
        }
        result.pages.push_back(std::move(page));
    }
    return result;
}

LabeledPage random_crop(const TensorGrid& image, const PageAnnotation& ann,
                        int crop_w, int crop_h, std::mt19937_64& rng) {
    if (crop_w <= 0 || crop_h <= 0 || crop_w > image.width() || crop_h > image.height()) {
        throw std::invalid_argument("random_crop: crop must be positive and fit in the image");
    }
    if (crop_w % 32 != 0 || crop_h % 32 != 0) {
        throw std::invalid_argument("random_crop: crop dims must be divisible by 32");
    }

    const int max_x = image.width() - crop_w;
    const int max_y = image.height() - crop_h;
    const int ox = max_x > 0 ? static_cast<int>(rng() % static_cast<uint64_t>(max_x + 1)) : 0;
    const int oy = max_y > 0 ? static_cast<int>(rng() % static_cast<uint64_t>(max_y + 1)) : 0;

    LabeledPage out;
    out.image = TensorGrid(image.channels(), crop_h, crop_w);
    for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < crop_h; ++y) {
            for (int x = 0; x < crop_w; ++x) {
                out.image.at(c, y, x) = image.at(c, oy + y, ox + x);
            }
        }
    }

    out.annotation.image_path = ann.image_path;
    out.annotation.width = crop_w;
    out.annotation.height = crop_h;
    for (const BBox& b : ann.boxes) {
        const Corners c = to_corners(b);
        const double ix = std::max(0.0, std::min(c.x_max, static_cast<double>(ox + crop_w)) -
                                            std::max(c.x_min, static_cast<double>(ox)));
        const double iy = std::max(0.0, std::min(c.y_max, static_cast<double>(oy + crop_h)) -
                                            std::max(c.y_min, static_cast<double>(oy)));
        const double area = static_cast<double>(b.w) * b.h;
        if (ix * iy < 0.25 * area) continue;
        BBox shifted = b;
        shifted.cx -= static_cast<float>(ox);
        shifted.cy -= static_cast<float>(oy);
        if (auto clamped = clamp_to_image(shifted, crop_w, crop_h)) {
            out.annotation.boxes.push_back(*clamped);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tensor files ("HRTG")

namespace {
constexpr char kTensorMagic[4] = {'H', 'R', 'T', 'G'};
constexpr uint16_t kTensorVersion = 1;
constexpr uint8_t kDtypeF32 = 1;
}  // namespace

void write_tensor(const std::string& path, const TensorGrid& grid) {
    std::string payload;
    payload.reserve(grid.size() * 4);
    for (float f : grid.buffer()) binio::put_f32(payload, f);

    std::string out;
    out.append(kTensorMagic, 4);
    binio::put_u16(out, kTensorVersion);
    out.push_back(static_cast<char>(kDtypeF32));
    out.push_back(static_cast<char>(3));  // rank
    binio::put_u32(out, static_cast<uint32_t>(grid.channels()));
    binio::put_u32(out, static_cast<uint32_t>(grid.height()));
    binio::put_u32(out, static_cast<uint32_t>(grid.width()));
    out += payload;
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
    binio::put_u32(out, crc);
    binio::write_file(path, out);
}

TensorGrid read_tensor(const std::string& path) {
    const std::string data = binio::read_file(path);
    binio::Reader r{data, 0, path};

    r.need(4);
    if (std::memcmp(data.data(), kTensorMagic, 4) != 0) {
        throw FormatError("not a tensor file (bad magic): " + path);
    }
    r.pos = 4;
    const uint16_t version = r.u16();
    if (version != kTensorVersion) {
        throw FormatError("unsupported tensor version " + std::to_string(version) + ": " + path);
    }
    if (r.u8() != kDtypeF32) throw FormatError("unsupported tensor dtype: " + path);
    const uint8_t rank = r.u8();
    if (rank != 3) throw FormatError("unsupported tensor rank " + std::to_string(rank) + ": " + path);

    const uint32_t c = r.u32();
    const uint32_t h = r.u32();
    const uint32_t w = r.u32();
    if (c == 0 || h == 0 || w == 0) throw FormatError("zero tensor dimension: " + path);
    const size_t count = static_cast<size_t>(c) * h * w;

    if (data.size() != r.pos + count * 4 + 4) {
        throw FormatError("tensor payload length mismatch (header says " + std::to_string(count) +
                          " floats): " + path);
    }
    const uint32_t crc = static_cast<uint32_t>(crc32(
        0L, reinterpret_cast<const Bytef*>(data.data() + r.pos), static_cast<uInt>(count * 4)));

    TensorGrid grid(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    for (size_t i = 0; i < count; ++i) grid.buffer()[i] = r.f32();
    if (r.u32() != crc) throw FormatError("tensor CRC mismatch: " + path);
    return grid;
}

}  // namespace hrcdet
