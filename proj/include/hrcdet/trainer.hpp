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

#include <functional>
#include <optional>
#include <vector>

#include "hrcdet/codec.hpp"
#include "hrcdet/data.hpp"
#include "hrcdet/model.hpp"

namespace hrcdet {

/// Epoch-loop settings around Model::train_step.
struct FitConfig {
    int epochs = 1;
    int batch_size = 8;
    TrainConfig train;
    CodecConfig codec;
    /// When set, each sample is randomly cropped to this square size
    /// (pixels, divisible by 32) before target encoding.
    std::optional<int> crop_size;
    uint64_t seed = 0;  ///< shuffling and crop placement
};

struct FitResult {
    LossReport first_epoch;
    LossReport last_epoch;
    int steps = 0;
};

/// Shuffles pages each epoch, encodes targets, and runs train_step over
/// mini-batches. `on_epoch(epoch_index, mean_report)` is invoked after
/// every epoch when provided.
FitResult fit(Model& model, const std::vector<LabeledPage>& pages, const FitConfig& cfg,
              const std::function<void(int, const LossReport&)>& on_epoch = nullptr);

}  // namespace hrcdet
