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

#include <string>
#include <vector>

#include "hrcdet/codec.hpp"
#include "hrcdet/core.hpp"
#include "hrcdet/data.hpp"
#include "hrcdet/model.hpp"

namespace hrcdet {

/// Matching outcome for one page. Matching is greedy and one-to-one:
/// predictions walk in descending score and claim their highest-IoU
/// unmatched ground truth when that IoU reaches the threshold. mean_iou
/// averages matched IoUs over all ground truths, counting misses as 0.
struct PageEval {
    std::string image;
    int n_gt = 0;
    int n_pred = 0;
    int n_matched = 0;
    double iou_sum = 0;  ///< sum of matched IoUs
    double mean_iou = 0;
    double precision = 0;
    double recall = 0;
};

struct EvalReport {
    double mean_iou = 0;
    double precision_at_50 = 0;
    double recall_at_50 = 0;
    int n_gt = 0;
    int n_pred = 0;
    std::vector<PageEval> per_page;

    std::string table() const;     ///< human-readable summary
    std::string to_jsonl() const;  ///< one line per page plus a summary line
};

PageEval match_and_score(const std::vector<Detection>& preds, const std::vector<BBox>& gts,
                         double iou_thresh);

/// Pools page rows into a dataset-level report (sums weighted by
/// ground-truth and prediction counts).
EvalReport aggregate(std::vector<PageEval> rows);

/// Runs the model and decoder over every page and scores the detections
/// at IoU 0.5.
EvalReport evaluate(const Model& model, const std::vector<LabeledPage>& pages,
                    const CodecConfig& codec);

/// Inference latency over `iters` timed runs (after `warmup` untimed ones)
/// of forward + decode on one fixed random image.
struct BenchReport {
    double mean_ms = 0;
    double p50_ms = 0;
    double p95_ms = 0;
    double images_per_s = 0;
    int input_w = 0, input_h = 0;
    int warmup_iters = 0, timed_iters = 0;

    std::string table() const;
    std::string to_json() const;
};

BenchReport benchmark_inference(const Model& model, int input_w, int input_h,
                                int warmup, int iters);

/// Writes the page as an RGB PNG with red box outlines and score labels.
void render_overlay(const TensorGrid& image, const std::vector<Detection>& dets,
                    const std::string& path);

}  // namespace hrcdet
