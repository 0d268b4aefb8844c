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

#include <cassert>
#include <cstddef>
#include <optional>
#include <vector>

namespace hrcdet {

/// Axis-aligned box in continuous pixel coordinates, stored in
/// center+size form. Corner form is a derived view.
///
/// Coordinate convention: origin at the top-left, x rightward, y downward;
/// pixel (row i, col j) covers [j, j+1) x [i, i+1). Centers may fall
/// between pixel centers.
struct BBox {
    float cx = 0.f;  ///< center x, pixels
    float cy = 0.f;  ///< center y, pixels
    float w = 0.f;   ///< width, pixels, > 0
    float h = 0.f;   ///< height, pixels, > 0

    bool valid() const { return w > 0.f && h > 0.f; }
};

/// Corner form (x_min, y_min, x_max, y_max) of a box.
struct Corners {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

Corners to_corners(const BBox& b);

/// Inverse of to_corners. Throws std::invalid_argument on inverted corners.
BBox from_corners(double x_min, double y_min, double x_max, double y_max);

/// Set-measure intersection over union of two boxes, computed on the
/// continuous areas. Symmetric, in [0, 1], 1 iff the boxes are identical.
double iou(const BBox& a, const BBox& b);

/// Clips a box to [0, width] x [0, height]. Returns nullopt when the box
/// has no interior left after clipping (fully outside the image).
std::optional<BBox> clamp_to_image(const BBox& b, int width, int height);

/// Dense rank-3 grid (channels x height x width), row-major with the
/// channel index outermost. Carrier for images, heatmaps and all
/// target/prediction maps. TensorGrid is the 32-bit instantiation used
/// throughout the public API; the double instantiation backs the
/// finite-difference verification paths.
template <typename T>
class BasicGrid {
 public:
    BasicGrid() = default;
    BasicGrid(int channels, int height, int width, T fill = T(0))
        : c_(channels), h_(height), w_(width),
          v_(static_cast<size_t>(channels) * height * width, fill) {
        assert(channels > 0 && height > 0 && width > 0);
    }

    int channels() const { return c_; }
    int height() const { return h_; }
    int width() const { return w_; }
    bool empty() const { return v_.empty(); }
    size_t size() const { return v_.size(); }

    T& at(int c, int y, int x) { return v_[idx(c, y, x)]; }
    const T& at(int c, int y, int x) const { return v_[idx(c, y, x)]; }

    T* data() { return v_.data(); }
    const T* data() const { return v_.data(); }
    std::vector<T>& buffer() { return v_; }
    const std::vector<T>& buffer() const { return v_; }

    bool same_shape(const BasicGrid& o) const {
        return c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }

    template <typename U>
    BasicGrid<U> cast() const {
        BasicGrid<U> out(c_, h_, w_);
        for (size_t i = 0; i < v_.size(); ++i) out.buffer()[i] = static_cast<U>(v_[i]);
        return out;
    }

 private:
    size_t idx(int c, int y, int x) const {
        assert(c >= 0 && c < c_ && y >= 0 && y < h_ && x >= 0 && x < w_);
        return (static_cast<size_t>(c) * h_ + y) * w_ + x;
    }

    int c_ = 0, h_ = 0, w_ = 0;
    std::vector<T> v_;
};

using TensorGrid = BasicGrid<float>;

}  // namespace hrcdet
