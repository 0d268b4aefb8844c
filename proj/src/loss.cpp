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

#include "hrcdet/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace hrcdet {

namespace {
constexpr double kClampEps = 1e-7;

void require_same_shape(const char* who, bool ok) {
    if (!ok) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}
}  // namespace

void LossWeights::validate() const {
    if (!(gamma_h > 0.f && gamma_s > 0.f && gamma_offset > 0.f && alpha > 0.f && beta > 0.f)) {
        throw std::invalid_argument("LossWeights: all fields must be strictly positive");
    }
}

template <typename T>
LossResult<T> heatmap_focal_loss(const BasicGrid<T>& pred, const BasicGrid<T>& target,
                                 int n, const LossWeights& w) {
    require_same_shape("heatmap_focal_loss", pred.same_shape(target));
    if (n < 0) throw std::invalid_argument("heatmap_focal_loss: n must be >= 0");

    const double alpha = w.alpha;
    const double beta = w.beta;
    const double inv_n = 1.0 / std::max(n, 1);

    LossResult<T> r;
    r.grad = BasicGrid<T>(pred.channels(), pred.height(), pred.width());
    double sum = 0;
    const T* pp = pred.data();
    const T* tp = target.data();
    T* gp = r.grad.data();
    const size_t count = pred.size();
    for (size_t i = 0; i < count; ++i) {
        const double raw = pp[i];
        const double p = std::min(1.0 - kClampEps, std::max(kClampEps, raw));
        const bool clamped = raw != p;
        const double t = tp[i];
        double g;
        if (t == 1.0) {
            const double om = 1.0 - p;
            sum += std::pow(om, alpha) * std::log(p);
            // d/dp[(1-p)^a log p] = -a (1-p)^(a-1) log p + (1-p)^a / p
            g = -(-alpha * std::pow(om, alpha - 1.0) * std::log(p) + std::pow(om, alpha) / p);
        } else {
            const double damp = std::pow(1.0 - t, beta);
            sum += damp * std::pow(p, alpha) * std::log(1.0 - p);
            // d/dp[p^a log(1-p)] = a p^(a-1) log(1-p) - p^a / (1-p)
            g = -damp * (alpha * std::pow(p, alpha - 1.0) * std::log(1.0 - p) -
                         std::pow(p, alpha) / (1.0 - p));
        }
        gp[i] = clamped ? T(0) : static_cast<T>(g * inv_n);
    }
    r.value = -sum * inv_n;
    return r;
}

namespace {

// Shared body of the size and offset losses: per-pixel L1 restricted to
// mask pixels, normalized by max(n,1).
template <typename T>
LossResult<T> masked_l1(const char* who, const BasicGrid<T>& pred, const BasicGrid<T>& target,
                        const BasicGrid<T>& mask, int n) {
    require_same_shape(who, pred.same_shape(target));
    require_same_shape(who, mask.channels() == 1 && mask.height() == pred.height() &&
                                mask.width() == pred.width());
    if (n < 0) throw std::invalid_argument(std::string(who) + ": n must be >= 0");

    const double inv_n = 1.0 / std::max(n, 1);
    LossResult<T> r;
    r.grad = BasicGrid<T>(pred.channels(), pred.height(), pred.width());
    double sum = 0;
    for (int c = 0; c < pred.channels(); ++c) {
        for (int y = 0; y < pred.height(); ++y) {
            for (int x = 0; x < pred.width(); ++x) {
                if (mask.at(0, y, x) == T(0)) continue;
                const double d = static_cast<double>(pred.at(c, y, x)) - target.at(c, y, x);
                sum += std::abs(d);
                if (d > 0) {
                    r.grad.at(c, y, x) = static_cast<T>(inv_n);
                } else if (d < 0) {
                    r.grad.at(c, y, x) = static_cast<T>(-inv_n);
                }  // exact tie: subgradient 0
            }
        }
    }
    r.value = sum * inv_n;
    return r;
}

}  // namespace

template <typename T>
LossResult<T> size_loss(const BasicGrid<T>& pred, const BasicGrid<T>& target,
                        const BasicGrid<T>& mask, int n) {
    return masked_l1("size_loss", pred, target, mask, n);
}

template <typename T>
LossResult<T> offset_loss(const BasicGrid<T>& pred, const BasicGrid<T>& target,
                          const BasicGrid<T>& mask, int n) {
    return masked_l1("offset_loss", pred, target, mask, n);
}

template <typename T>
TotalLossResult<T> total_loss(const NetOutputOf<T>& pred, const TargetSetOf<T>& targets,
                              const LossWeights& w) {
    w.validate();
    const int n = targets.n_objects;
    auto h = heatmap_focal_loss(pred.heatmap, targets.heatmap, n, w);
    auto s = size_loss(pred.size, targets.size_map, targets.mask, n);
    auto o = offset_loss(pred.offset, targets.offset_map, targets.mask, n);

    TotalLossResult<T> r;
    r.report.l_h = h.value;
    r.report.l_s = s.value;
    r.report.l_offset = o.value;
    r.report.total = w.gamma_h * h.value + w.gamma_s * s.value + w.gamma_offset * o.value;
    r.report.n_objects = n;

    auto scale = [](BasicGrid<T>& g, double k) {
        for (auto& v : g.buffer()) v = static_cast<T>(v * k);
    };
    scale(h.grad, w.gamma_h);
    scale(s.grad, w.gamma_s);
    scale(o.grad, w.gamma_offset);
    r.grad.heatmap = std::move(h.grad);
    r.grad.size = std::move(s.grad);
    r.grad.offset = std::move(o.grad);
    return r;
}

template LossResult<float> heatmap_focal_loss(const BasicGrid<float>&, const BasicGrid<float>&, int, const LossWeights&);
template LossResult<double> heatmap_focal_loss(const BasicGrid<double>&, const BasicGrid<double>&, int, const LossWeights&);
template LossResult<float> size_loss(const BasicGrid<float>&, const BasicGrid<float>&, const BasicGrid<float>&, int);
template LossResult<double> size_loss(const BasicGrid<double>&, const BasicGrid<double>&, const BasicGrid<double>&, int);
template LossResult<float> offset_loss(const BasicGrid<float>&, const BasicGrid<float>&, const BasicGrid<float>&, int);
template LossResult<double> offset_loss(const BasicGrid<double>&, const BasicGrid<double>&, const BasicGrid<double>&, int);
template TotalLossResult<float> total_loss(const NetOutputOf<float>&, const TargetSetOf<float>&, const LossWeights&);
template TotalLossResult<double> total_loss(const NetOutputOf<double>&, const TargetSetOf<double>&, const LossWeights&);

}  // namespace hrcdet
