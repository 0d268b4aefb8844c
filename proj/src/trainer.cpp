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

#include "hrcdet/trainer.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace hrcdet {

FitResult fit(Model& model, const std::vector<LabeledPage>& pages, const FitConfig& cfg,
              const std::function<void(int, const LossReport&)>& on_epoch) {
    if (pages.empty()) throw std::invalid_argument("fit: no training pages");
    if (cfg.epochs <= 0 || cfg.batch_size <= 0)
        throw std::invalid_argument("fit: epochs and batch_size must be positive");

    std::mt19937_64 rng(cfg.seed);
    AdamState state;
    FitResult result;

    std::vector<size_t> order(pages.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the explicit engine keeps shuffles reproducible.
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = rng() % i;
            std::swap(order[i - 1], order[j]);
        }

        LossReport epoch_mean;
        int batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::vector<TrainSample> batch;
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            for (size_t i = start; i < end; ++i) {
                const LabeledPage& page = pages[order[i]];
                TrainSample sample;
                if (cfg.crop_size) {
                    LabeledPage cropped =
                        random_crop(page.image, page.annotation, *cfg.crop_size, *cfg.crop_size, rng);
                    sample.image = std::move(cropped.image);
                    sample.targets = encode_targets(cropped.annotation.boxes, *cfg.crop_size,
                                                    *cfg.crop_size, cfg.codec);
                } else {
                    sample.image = page.image;
                    sample.targets = encode_targets(page.annotation.boxes, page.image.width(),
                                                    page.image.height(), cfg.codec);
                }
                batch.push_back(std::move(sample));
            }
            const LossReport r = model.train_step(batch, state, cfg.train);
            epoch_mean.l_h += r.l_h;
            epoch_mean.l_s += r.l_s;
            epoch_mean.l_offset += r.l_offset;
            epoch_mean.total += r.total;
            epoch_mean.n_objects += r.n_objects;
            ++batches;
            ++result.steps;
        }
        epoch_mean.l_h /= batches;
        epoch_mean.l_s /= batches;
        epoch_mean.l_offset /= batches;
        epoch_mean.total /= batches;
        if (epoch == 0) result.first_epoch = epoch_mean;
        result.last_epoch = epoch_mean;
        if (on_epoch) on_epoch(epoch, epoch_mean);
    }
    return result;
}

}  // namespace hrcdet
