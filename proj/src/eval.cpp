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

#include "hrcdet/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "hrcdet/image_io.hpp"
#include "hrcdet/rng.hpp"

using nlohmann::json;

namespace hrcdet {

PageEval match_and_score(const std::vector<Detection>& preds, const std::vector<BBox>& gts,
                         double iou_thresh) {
    std::vector<size_t> order(preds.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return preds[a].score > preds[b].score; });

    PageEval row;
    row.n_gt = static_cast<int>(gts.size());
    row.n_pred = static_cast<int>(preds.size());

    std::vector<bool> taken(gts.size(), false);
    for (size_t pi : order) {
        double best = 0;
        int best_gt = -1;
        for (size_t gi = 0; gi < gts.size(); ++gi) {
            if (taken[gi]) continue;
            const double v = iou(preds[pi].bbox, gts[gi]);
            if (v > best) {
                best = v;
                best_gt = static_cast<int>(gi);
            }
        }
        if (best_gt >= 0 && best >= iou_thresh) {
            taken[best_gt] = true;
            ++row.n_matched;
            row.iou_sum += best;
        }
    }
    row.mean_iou = row.n_gt > 0 ? row.iou_sum / row.n_gt : 0.0;
    row.precision = row.n_pred > 0 ? static_cast<double>(row.n_matched) / row.n_pred : 0.0;
    row.recall = row.n_gt > 0 ? static_cast<double>(row.n_matched) / row.n_gt : 0.0;
    return row;
}

EvalReport aggregate(std::vector<PageEval> rows) {
    EvalReport rep;
    double iou_sum = 0;
    int matched = 0;
    for (const PageEval& r : rows) {
        rep.n_gt += r.n_gt;
        rep.n_pred += r.n_pred;
        matched += r.n_matched;
        iou_sum += r.iou_sum;
    }
    rep.mean_iou = rep.n_gt > 0 ? iou_sum / rep.n_gt : 0.0;
    rep.precision_at_50 = rep.n_pred > 0 ? static_cast<double>(matched) / rep.n_pred : 0.0;
    rep.recall_at_50 = rep.n_gt > 0 ? static_cast<double>(matched) / rep.n_gt : 0.0;
    rep.per_page = std::move(rows);
    return rep;
}

EvalReport evaluate(const Model& model, const std::vector<LabeledPage>& pages,
                    const CodecConfig& codec) {
    std::vector<PageEval> rows;
    rows.reserve(pages.size());
    for (const LabeledPage& page : pages) {
        const NetOutput out = model.forward(page.image);
        const std::vector<Detection> dets =
            decode_detections(out, page.image.width(), page.image.height(), codec);
        PageEval row = match_and_score(dets, page.annotation.boxes, 0.5);
        row.image = page.annotation.image_path;
        rows.push_back(std::move(row));
    }
    return aggregate(std::move(rows));
}

std::string EvalReport::table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "pages: " << per_page.size() << "  gt: " << n_gt << "  pred: " << n_pred << "\n";
    os << "mean_iou: " << mean_iou << "  precision@50: " << precision_at_50
       << "  recall@50: " << recall_at_50 << "\n";
    return os.str();
}

std::string EvalReport::to_jsonl() const {
    std::ostringstream os;
    for (const PageEval& r : per_page) {
        json j{{"image", r.image},       {"n_gt", r.n_gt},         {"n_pred", r.n_pred},
               {"n_matched", r.n_matched}, {"mean_iou", r.mean_iou}, {"precision", r.precision},
               {"recall", r.recall}};
        os << j.dump() << "\n";
    }
    json summary{{"summary", true},
                 {"mean_iou", mean_iou},
                 {"precision_at_50", precision_at_50},
                 {"recall_at_50", recall_at_50},
                 {"n_gt", n_gt},
                 {"n_pred", n_pred}};
    os << summary.dump() << "\n";
    return os.str();
}

BenchReport benchmark_inference(const Model& model, int input_w, int input_h,
                                int warmup, int iters) {
    if (iters < 10) throw std::invalid_argument("benchmark: iters must be >= 10");
    if (input_w % 32 != 0 || input_h % 32 != 0) {
        throw std::invalid_argument("benchmark: input dims must be divisible by 32");
    }

    TensorGrid image(model.config().input_channels, input_h, input_w);
    Rng rng(1234);
    for (float& v : image.buffer()) v = static_cast<float>(rng.uniform());

    CodecConfig codec;
    auto run_once = [&] {
        const NetOutput out = model.forward(image);
        (void)decode_detections(out, input_w, input_h, codec);
    };

    for (int i = 0; i < warmup; ++i) run_once();

    std::vector<double> ms(iters);
    for (int i = 0; i < iters; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        run_once();
        const auto t1 = std::chrono::steady_clock::now();
        ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }

    BenchReport rep;
    rep.input_w = input_w;
    rep.input_h = input_h;
    rep.warmup_iters = warmup;
    rep.timed_iters = iters;
    double total = 0;
    for (double v : ms) total += v;
    rep.mean_ms = total / iters;
    std::sort(ms.begin(), ms.end());
    rep.p50_ms = ms[static_cast<size_t>(0.5 * (iters - 1))];
    rep.p95_ms = ms[static_cast<size_t>(0.95 * (iters - 1))];
    rep.images_per_s = rep.mean_ms > 0 ? 1000.0 / rep.mean_ms : 0.0;
    return rep;
}

std::string BenchReport::table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "input: " << input_w << "x" << input_h << "  warmup: " << warmup_iters
       << "  iters: " << timed_iters << "\n";
    os << "mean: " << mean_ms << " ms  p50: " << p50_ms << " ms  p95: " << p95_ms
       << " ms  throughput: " << images_per_s << " img/s\n";
    return os.str();
}

std::string BenchReport::to_json() const {
    json j{{"mean_ms", mean_ms},   {"p50_ms", p50_ms},          {"p95_ms", p95_ms},
           {"images_per_s", images_per_s}, {"input_w", input_w}, {"input_h", input_h},
           {"warmup_iters", warmup_iters}, {"timed_iters", timed_iters}};
    return j.dump();
}

// ---------------------------------------------------------------------------
// Overlay rendering

namespace {

// 3x5 bitmap glyphs for "0123456789."
const uint16_t kDigitRows[11][5] = {
    {0b111, 0b101, 0b101, 0b101, 0b111},  // 0
    {0b010, 0b110, 0b010, 0b010, 0b111},  // 1
    {0b111, 0b001, 0b111, 0b100, 0b111},  // 2
    {0b111, 0b001, 0b111, 0b001, 0b111},  // 3
    {0b101, 0b101, 0b111, 0b001, 0b001},  // 4
    {0b111, 0b100, 0b111, 0b001, 0b111},  // 5
    {0b111, 0b100, 0b111, 0b101, 0b111},  // 6
    {0b111, 0b001, 0b010, 0b010, 0b010},  // 7
    {0b111, 0b101, 0b111, 0b101, 0b111},  // 8
    {0b111, 0b101, 0b111, 0b001, 0b111},  // 9
    {0b000, 0b000, 0b000, 0b000, 0b010},  // .
};

void put_red(TensorGrid& rgb, int x, int y) {
    if (x < 0 || x >= rgb.width() || y < 0 || y >= rgb.height()) return;
    rgb.at(0, y, x) = 1.f;
    rgb.at(1, y, x) = 0.f;
    rgb.at(2, y, x) = 0.f;
}

void draw_text(TensorGrid& rgb, const std::string& text, int x, int y) {
    for (char ch : text) {
        int g = -1;
        if (ch >= '0' && ch <= '9') g = ch - '0';
        if (ch == '.') g = 10;
        if (g >= 0) {
            for (int ry = 0; ry < 5; ++ry) {
                for (int rx = 0; rx < 3; ++rx) {
                    if (kDigitRows[g][ry] & (1 << (2 - rx))) put_red(rgb, x + rx, y + ry);
                }
            }
        }
        x += 4;
    }
}

}  // namespace

void render_overlay(const TensorGrid& image, const std::vector<Detection>& dets,
                    const std::string& path) {
    TensorGrid rgb(3, image.height(), image.width());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                rgb.at(c, y, x) = image.channels() == 3 ? image.at(c, y, x) : image.at(0, y, x);
            }
        }
    }

    for (const Detection& d : dets) {
        const Corners c = to_corners(d.bbox);
        const int x0 = std::clamp(static_cast<int>(std::lround(c.x_min)), 0, rgb.width() - 1);
        const int y0 = std::clamp(static_cast<int>(std::lround(c.y_min)), 0, rgb.height() - 1);
        const int x1 = std::clamp(static_cast<int>(std::lround(c.x_max)) - 1, x0, rgb.width() - 1);
        const int y1 = std::clamp(static_cast<int>(std::lround(c.y_max)) - 1, y0, rgb.height() - 1);
        for (int x = x0; x <= x1; ++x) {
            put_red(rgb, x, y0);
            put_red(rgb, x, y1);
        }
        for (int y = y0; y <= y1; ++y) {
            put_red(rgb, x0, y);
            put_red(rgb, x1, y);
        }
        char label[16];
        std::snprintf(label, sizeof(label), "%.2f", d.score);
        draw_text(rgb, label, x0, y0 >= 7 ? y0 - 7 : y1 + 2);
    }
    write_png(path, rgb);
}

}  // namespace hrcdet
