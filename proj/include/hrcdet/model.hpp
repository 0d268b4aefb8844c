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

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hrcdet/codec.hpp"
#include "hrcdet/core.hpp"
#include "hrcdet/loss.hpp"

namespace hrcdet {

/// Backbone hyperparameters. Branch i (0-indexed) runs at channel width
/// base_channels * 2^i and resolution input/(4 * 2^i); the default is
/// the desk-scale toy size, paper_w32() the full-scale preset.
struct ModelConfig {
    int base_channels = 8;                   ///< highest-resolution branch width (C)
    std::array<int, 3> stage_blocks{1, 1, 1};  ///< multi-resolution blocks in stages 2-4
    int blocks_per_branch = 2;               ///< residual blocks per branch per module
    int stage1_bottlenecks = 2;              ///< bottleneck blocks in stage 1
    int input_channels = 1;                  ///< 1 grayscale, 3 color
    int head_channels = 5;                   ///< 1 heatmap + 2 size + 2 offset

    static ModelConfig toy() { return ModelConfig{}; }
    static ModelConfig paper_w32() {
        ModelConfig c;
        c.base_channels = 32;
        c.stage_blocks = {1, 4, 3};
        c.blocks_per_branch = 4;
        c.stage1_bottlenecks = 4;
        c.input_channels = 3;
        return c;
    }

    void validate() const;  // throws std::invalid_argument
    bool operator==(const ModelConfig&) const = default;
};

/// One training example: input image plus its encoded targets.
struct TrainSample {
    TensorGrid image;
    TargetSet targets;
};

/// Adaptive-moment optimizer state (bias-corrected first/second moments).
struct AdamState {
    int64_t step = 0;
    std::vector<std::vector<float>> m, v;  ///< per learnable tensor
};

struct TrainConfig {
    float lr = 1e-6f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    LossWeights weights;
};

/// The parallel multi-resolution detector backbone with its 5-channel
/// sigmoid head. Deterministically initialized from a seed. forward() is
/// const and safe for concurrent callers; train_step() requires exclusive
/// access.
class Model {
 public:
    Model(const ModelConfig& cfg, uint64_t seed);
    ~Model();
    Model(Model&&) noexcept;
    Model& operator=(Model&&) noexcept;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    Model clone() const;

    const ModelConfig& config() const;

    /// Number of learnable scalars (conv weights/biases, norm affine).
    size_t parameter_count() const;

    /// Named mutable views over the learnable tensors, canonical order.
    struct ParamView {
        std::string name;
        float* data;
        size_t size;
    };
    std::vector<ParamView> parameters();

    /// Inference-mode forward (running normalization statistics).
    /// Input dims must be divisible by 32; output is input/4.
    NetOutput forward(const TensorGrid& image) const;

    /// One optimizer step on a batch: training-mode forward, composite
    /// loss, backward, adaptive-moment update. Returns the pre-update
    /// loss averaged over the batch. Throws on NaN loss.
    LossReport train_step(const std::vector<TrainSample>& batch, AdamState& state,
                          const TrainConfig& tc);

    /// Checkpoint I/O. The file format is fixed: magic "HRCN", version,
    /// tagged config block, float32 parameter blob in canonical order
    /// (learnables then normalization running statistics), CRC32.
    void save(const std::string& path) const;
    static Model load(const std::string& path);
    static Model load(const std::string& path, const ModelConfig& expected);

    // 64-bit verification path: training-mode forward and loss evaluated in
    // double precision, with optional perturbation of one learnable scalar
    // (flat index over the canonical learnable order). Backs the
    // finite-difference gradient checks.
    double batch_loss_f64(const std::vector<TrainSample>& batch, const LossWeights& w,
                          size_t perturb_index = SIZE_MAX, double delta = 0.0) const;
    std::vector<double> batch_param_gradients_f64(const std::vector<TrainSample>& batch,
                                                  const LossWeights& w) const;

 private:
    struct Impl;
    explicit Model(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

}  // namespace hrcdet
