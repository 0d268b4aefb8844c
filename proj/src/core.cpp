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

#include "hrcdet/core.hpp"

#include <algorithm>
#include <stdexcept>

namespace hrcdet {

Corners to_corners(const BBox& b) {
    const double hw = 0.5 * static_cast<double>(b.w);
    const double hh = 0.5 * static_cast<double>(b.h);
    return Corners{b.cx - hw, b.cy - hh, b.cx + hw, b.cy + hh};
}

BBox from_corners(double x_min, double y_min, double x_max, double y_max) {
    if (!(x_min < x_max) || !(y_min < y_max)) {
        throw std::invalid_argument("from_corners: inverted or degenerate corners");
    }
    BBox b;
    b.cx = static_cast<float>(0.5 * (x_min + x_max));
    b.cy = static_cast<float>(0.5 * (y_min + y_max));
    b.w = static_cast<float>(x_max - x_min);
    b.h = static_cast<float>(y_max - y_min);
    return b;
}

double iou(const BBox& a, const BBox& b) {
    const Corners ca = to_corners(a);
    const Corners cb = to_corners(b);
    const double ix = std::max(0.0, std::min(ca.x_max, cb.x_max) - std::max(ca.x_min, cb.x_min));
    const double iy = std::max(0.0, std::min(ca.y_max, cb.y_max) - std::max(ca.y_min, cb.y_min));
    const double inter = ix * iy;
    const double area_a = static_cast<double>(a.w) * a.h;
    const double area_b = static_cast<double>(b.w) * b.h;
    const double uni = area_a + area_b - inter;
    // w,h > 0 for valid boxes, so the union cannot vanish.
    const double v = inter / uni;
    return std::clamp(v, 0.0, 1.0);
}

std::optional<BBox> clamp_to_image(const BBox& b, int width, int height) {
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("clamp_to_image: image dims must be positive");
    }
    const Corners c = to_corners(b);
    const double x0 = std::max(0.0, c.x_min);
    const double y0 = std::max(0.0, c.y_min);
    const double x1 = std::min(static_cast<double>(width), c.x_max);
    const double y1 = std::min(static_cast<double>(height), c.y_max);
    if (!(x0 < x1) || !(y0 < y1)) return std::nullopt;
    return from_corners(x0, y0, x1, y1);
}

}  // namespace hrcdet
