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

#include "hrcdet/codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hrcdet {

void CodecConfig::validate() const {
    if (stride <= 0) throw std::invalid_argument("codec: stride must be positive");
    if (!(sigma_divisor > 0.f)) throw std::invalid_argument("codec: sigma_divisor must be positive");
    if (!(conf_thresh > 0.f && conf_thresh < 1.f))
        throw std::invalid_argument("codec: conf_thresh must be in (0,1)");
    if (!(nms_iou > 0.f && nms_iou < 1.f))
        throw std::invalid_argument("codec: nms_iou must be in (0,1)");
    if (peak_window < 1 || peak_window % 2 == 0)
        throw std::invalid_argument("codec: peak_window must be odd and >= 1");
    if (top_k <= 0) throw std::invalid_argument("codec: top_k must be positive");
}

double gaussian_value(double x, double y, double px, double py,
                      double sigma_x, double sigma_y) {
    const double dx = x - px;
    const double dy = y - py;
    const double e = dx * dx / (2.0 * sigma_x * sigma_x) + dy * dy / (2.0 * sigma_y * sigma_y);
    return std::exp(-e);
}

namespace {

// Splats one object's Gaussian onto the heatmap, max-combining with
// whatever is already there. Center is the integer mask pixel, so the
// value there is exactly 1.
void splat_gaussian(TensorGrid& heat, int cx, int cy, double sigma_x, double sigma_y) {
    const int w = heat.width();
    const int h = heat.height();
    const int rx = static_cast<int>(std::ceil(3.0 * sigma_x));
    const int ry = static_cast<int>(std::ceil(3.0 * sigma_y));
    for (int y = std::max(0, cy - ry); y <= std::min(h - 1, cy + ry); ++y) {
        for (int x = std::max(0, cx - rx); x <= std::min(w - 1, cx + rx); ++x) {
            const float v = static_cast<float>(gaussian_value(x, y, cx, cy, sigma_x, sigma_y));
            float& cell = heat.at(0, y, x);
            cell = std::max(cell, v);
        }
    }
}

}  // namespace

TargetSet encode_targets(const std::vector<BBox>& boxes, int in_w, int in_h,
                         const CodecConfig& cfg) {
    cfg.validate();
    if (in_w <= 0 || in_h <= 0 || in_w % cfg.stride != 0 || in_h % cfg.stride != 0) {
        throw std::invalid_argument("encode_targets: image dims must be positive and divisible by stride " +
                                    std::to_string(cfg.stride));
    }
    const int out_w = in_w / cfg.stride;
    const int out_h = in_h / cfg.stride;

    TargetSet t;
    t.heatmap = TensorGrid(1, out_h, out_w);
    t.size_map = TensorGrid(2, out_h, out_w);
    t.offset_map = TensorGrid(2, out_h, out_w);
    t.mask = TensorGrid(1, out_h, out_w);
    t.n_objects = static_cast<int>(boxes.size());

    const double stride = cfg.stride;
    for (const BBox& b : boxes) {
        if (!b.valid()) throw std::invalid_argument("encode_targets: invalid box (non-positive size)");
        const double sw = b.w / stride;
        const double sh = b.h / stride;
        if (std::lround(sw) == 0 || std::lround(sh) == 0) {
            throw std::invalid_argument("encode_targets: box size rounds to zero area at stride " +
                                        std::to_string(cfg.stride));
        }
        const double px = b.cx / stride;
        const double py = b.cy / stride;
        const int ix = static_cast<int>(std::floor(px));
        const int iy = static_cast<int>(std::floor(py));
        if (ix < 0 || ix >= out_w || iy < 0 || iy >= out_h) {
            throw std::invalid_argument("encode_targets: box center outside the image");
        }

        if (t.mask.at(0, iy, ix) != 0.f) ++t.center_collisions;
        t.mask.at(0, iy, ix) = 1.f;
        t.offset_map.at(0, iy, ix) = static_cast<float>(px - ix);
        t.offset_map.at(1, iy, ix) = static_cast<float>(py - iy);
        // Normalized sizes: (side/stride)/out_side == side/in_side.
        t.size_map.at(0, iy, ix) = static_cast<float>(b.h / in_h);
        t.size_map.at(1, iy, ix) = static_cast<float>(b.w / in_w);

        const double sigma_x = std::max(kMinSigma, sw / cfg.sigma_divisor);
        const double sigma_y = std::max(kMinSigma, sh / cfg.sigma_divisor);
        splat_gaussian(t.heatmap, ix, iy, sigma_x, sigma_y);
    }
    return t;
}

std::vector<Peak> extract_peaks(const TensorGrid& heatmap, const CodecConfig& cfg) {
    cfg.validate();
    if (heatmap.channels() != 1) throw std::invalid_argument("extract_peaks: heatmap must have 1 channel");
    const int w = heatmap.width();
    const int h = heatmap.height();
    const int r = cfg.peak_window / 2;

    std::vector<Peak> peaks;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float v = heatmap.at(0, y, x);
            if (v < cfg.conf_thresh) continue;
            bool is_peak = true;
            for (int dy = -r; dy <= r && is_peak; ++dy) {
                const int ny = y + dy;
                if (ny < 0 || ny >= h) continue;
                for (int dx = -r; dx <= r; ++dx) {
                    const int nx = x + dx;
                    if (nx < 0 || nx >= w || (dx == 0 && dy == 0)) continue;
                    if (heatmap.at(0, ny, nx) > v) {
                        is_peak = false;
                        break;
                    }
                }
            }
            if (is_peak) peaks.push_back(Peak{x, y, v});
        }
    }
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    if (static_cast<int>(peaks.size()) > cfg.top_k) peaks.resize(cfg.top_k);
    return peaks;
}

std::vector<Detection> nms(std::vector<Detection> dets, float iou_thresh) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    std::vector<Detection> kept;
    kept.reserve(dets.size());
    for (const Detection& d : dets) {
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (iou(d.bbox, k.bbox) > iou_thresh) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

std::vector<Detection> decode_detections(const NetOutput& out, int in_w, int in_h,
                                         const CodecConfig& cfg) {
    cfg.validate();
    if (out.size.channels() != 2 || out.offset.channels() != 2) {
        throw std::invalid_argument("decode_detections: size/offset maps must have 2 channels");
    }
    if (!out.size.same_shape(out.offset) || out.heatmap.height() != out.size.height() ||
        out.heatmap.width() != out.size.width()) {
        throw std::invalid_argument("decode_detections: map dims are inconsistent");
    }
    const int out_w = out.heatmap.width();
    const int out_h = out.heatmap.height();
    const double scale_x = static_cast<double>(in_w) / out_w;
    const double scale_y = static_cast<double>(in_h) / out_h;

    std::vector<Detection> dets;
    for (const Peak& p : extract_peaks(out.heatmap, cfg)) {
        const double off_x = out.offset.at(0, p.y, p.x);
        const double off_y = out.offset.at(1, p.y, p.x);
        const double nh = out.size.at(0, p.y, p.x);
        const double nw = out.size.at(1, p.y, p.x);
        BBox b;
        b.cx = static_cast<float>((p.x + off_x) * scale_x);
        b.cy = static_cast<float>((p.y + off_y) * scale_y);
        b.w = static_cast<float>(nw * in_w);
        b.h = static_cast<float>(nh * in_h);
        if (!b.valid()) continue;
        if (auto clamped = clamp_to_image(b, in_w, in_h)) {
            dets.push_back(Detection{*clamped, p.score});
        }
    }
    return nms(std::move(dets), cfg.nms_iou);
}

}  // namespace hrcdet
