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

#include <cstdint>
#include <vector>

#include "hrcdet/core.hpp"

namespace hrcdet {

/// Knobs of the target encoder and the detection decoder.
struct CodecConfig {
    int stride = 4;              ///< input-to-output resolution ratio
    float sigma_divisor = 10.f;  ///< sigma = (side / stride) / sigma_divisor, per axis
    float conf_thresh = 0.3f;    ///< peaks below this score are dropped
    float nms_iou = 0.5f;        ///< greedy box suppression threshold
    int peak_window = 3;         ///< odd local-maximum window side
    int top_k = 500;             ///< cap on extracted peaks

    void validate() const;  // throws std::invalid_argument
};

/// Gaussians narrower than this (in output pixels) are widened to it, so
/// tiny objects still leave a usable footprint on the heatmap.
inline constexpr double kMinSigma = 0.5;

/// Ground-truth side of the training objective: center heatmap, normalized
/// size map, sub-pixel offset map and the center-pixel mask, all on the
/// stride-divided output grid.
///
/// Channel layout:
///   heatmap     1 x H x W   in [0,1], exactly 1 at mask pixels
///   size_map    2 x H x W   [0] = height / in_h, [1] = width / in_w
///   offset_map  2 x H x W   [0] = x fractional part, [1] = y fractional part
///   mask        1 x H x W   in {0,1}
/// size_map and offset_map are zero wherever mask is zero.
template <typename T>
struct TargetSetOf {
    BasicGrid<T> heatmap;
    BasicGrid<T> size_map;
    BasicGrid<T> offset_map;
    BasicGrid<T> mask;
    int n_objects = 0;
    /// Number of objects whose center pixel was already claimed by an
    /// earlier object. The representation holds one object per pixel; the
    /// later object overwrites size/offset there and is counted here.
    int center_collisions = 0;
};
using TargetSet = TargetSetOf<float>;

/// The 5-channel prediction bundle produced by the network head:
/// 1 heatmap channel, 2 size channels, 2 offset channels, each already
/// squashed to (0,1). Same channel meanings as TargetSetOf.
template <typename T>
struct NetOutputOf {
    BasicGrid<T> heatmap;  ///< 1 x H x W
    BasicGrid<T> size;     ///< 2 x H x W, [0]=height, [1]=width (normalized)
    BasicGrid<T> offset;   ///< 2 x H x W, [0]=x, [1]=y fractional offsets
};
using NetOutput = NetOutputOf<float>;

/// One decoded box with its confidence, in input-image pixels.
struct Detection {
    BBox bbox;
    float score = 0.f;
};

/// A local maximum of the heatmap on the output grid.
struct Peak {
    int x = 0;
    int y = 0;
    float score = 0.f;
};

/// Unnormalized elliptical 2D Gaussian: exp(-((x-px)^2 / (2 sx^2) +
/// (y-py)^2 / (2 sy^2))). Equals 1 at (px, py).
double gaussian_value(double x, double y, double px, double py,
                      double sigma_x, double sigma_y);

/// Encodes ground-truth boxes (input-image pixels) into training targets on
/// the in_w/stride x in_h/stride grid. Overlapping Gaussians combine by
/// per-pixel max. Throws std::invalid_argument when the image dims are not
/// divisible by the stride, when a box's stride-divided size rounds to zero
/// area, or when a box center falls outside the image.
TargetSet encode_targets(const std::vector<BBox>& boxes, int in_w, int in_h,
                         const CodecConfig& cfg);

/// Pixels that are >= every neighbor in a peak_window x peak_window window
/// and score at least conf_thresh. Sorted by descending score (ties by
/// ascending (y, x)), truncated to top_k. Tied neighbors both qualify;
/// duplicates they may decode into are resolved by box-level NMS.
std::vector<Peak> extract_peaks(const TensorGrid& heatmap, const CodecConfig& cfg);

/// Greedy non-maximum suppression: walk detections by descending score and
/// keep one iff its IoU with every already-kept box is <= iou_thresh.
/// Output preserves descending-score order; equal scores keep input order.
std::vector<Detection> nms(std::vector<Detection> dets, float iou_thresh);

/// Full decode: peak extraction, map lookup, rescale to input pixels,
/// clamping, NMS. Inverse of encode_targets on well-separated boxes.
std::vector<Detection> decode_detections(const NetOutput& out, int in_w, int in_h,
                                         const CodecConfig& cfg);

}  // namespace hrcdet
