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

#include "hrcdet/codec.hpp"
#include "hrcdet/core.hpp"

namespace hrcdet {

/// Weights and exponents of the composite objective.
struct LossWeights {
    float gamma_h = 1.f;       ///< heatmap term weight
    float gamma_s = 5.f;       ///< size term weight
    float gamma_offset = 10.f; ///< offset term weight
    float alpha = 2.f;         ///< focal exponent on the prediction
    float beta = 4.f;          ///< focal exponent on (1 - target)

    void validate() const;  // throws std::invalid_argument
};

/// Per-image loss breakdown. total = gamma_h*l_h + gamma_s*l_s +
/// gamma_offset*l_offset.
struct LossReport {
    double l_h = 0;
    double l_s = 0;
    double l_offset = 0;
    double total = 0;
    int n_objects = 0;
};

/// Loss value plus the gradient with respect to the prediction grid.
template <typename T>
struct LossResult {
    double value = 0;
    BasicGrid<T> grad;
};

/// Penalty-reduced pixelwise focal loss over the center heatmap.
///
/// value = -(1/max(n,1)) * sum over pixels of
///     (1-p)^alpha * log(p)                    where target == 1
///     (1-t)^beta * p^alpha * log(1-p)         otherwise
///
/// Predictions are clamped to [1e-7, 1-1e-7] before the logarithms; the
/// gradient is exactly consistent with the clamped function (zero where the
/// clamp binds). n is the number of objects in the image.
template <typename T>
LossResult<T> heatmap_focal_loss(const BasicGrid<T>& pred, const BasicGrid<T>& target,
                                 int n, const LossWeights& w);

/// Masked L1 over the 2-channel normalized size map, summed at mask pixels
/// only and divided by max(n,1). Subgradient 0 at exact ties.
template <typename T>
LossResult<T> size_loss(const BasicGrid<T>& pred, const BasicGrid<T>& target,
                        const BasicGrid<T>& mask, int n);

/// Same contract as size_loss, over the 2-channel sub-pixel offset map.
template <typename T>
LossResult<T> offset_loss(const BasicGrid<T>& pred, const BasicGrid<T>& target,
                          const BasicGrid<T>& mask, int n);

/// Composite objective and the gradients for all five prediction channels.
template <typename T>
struct TotalLossResult {
    LossReport report;
    NetOutputOf<T> grad;  ///< d(total)/d(prediction), weighted
};

template <typename T>
TotalLossResult<T> total_loss(const NetOutputOf<T>& pred, const TargetSetOf<T>& targets,
                              const LossWeights& w);

}  // namespace hrcdet
