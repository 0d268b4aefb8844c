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

#include "hrcdet/model.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "binio.hpp"
#include "hrcdet/errors.hpp"
#include "hrcdet/rng.hpp"
#include "nn.hpp"

namespace hrcdet {

void ModelConfig::validate() const {
    if (base_channels <= 0) throw std::invalid_argument("ModelConfig: base_channels must be positive");
    if (input_channels != 1 && input_channels != 3)
        throw std::invalid_argument("ModelConfig: input_channels must be 1 or 3");
    if (head_channels != 5) throw std::invalid_argument("ModelConfig: head_channels must be 5");
    if (stage1_bottlenecks <= 0 || blocks_per_branch <= 0)
        throw std::invalid_argument("ModelConfig: block counts must be positive");
    for (int b : stage_blocks) {
        if (b <= 0) throw std::invalid_argument("ModelConfig: stage_blocks must be positive");
    }
}

namespace {

// The network: stem (two stride-2 3x3 convs to 1/4 resolution), a
// bottleneck stage, then three stages of parallel branches at widths
// C*2^i, each stage a sequence of [per-branch residual blocks + dense
// cross-resolution fusion], growing one branch per stage. The final
// fusion folds everything into the highest-resolution branch feeding a
// 1x1 head with sigmoid.
nn::Graph build_graph(const ModelConfig& cfg) {
    const int C = cfg.base_channels;
    const int S = 2 * C;  // stem width
    nn::Graph g;
    int x = g.add_input(cfg.input_channels);

    auto cbr = [&](int src, int cin, int cout, int k, int stride, const std::string& name) {
        int c = g.add_conv(src, cin, cout, k, stride, false, name);
        int b = g.add_bn(c, cout, name + ".bn");
        return g.add_relu(b);
    };
    auto cb = [&](int src, int cin, int cout, int k, int stride, const std::string& name) {
        int c = g.add_conv(src, cin, cout, k, stride, false, name);
        return g.add_bn(c, cout, name + ".bn");
    };

    x = cbr(x, cfg.input_channels, S, 3, 2, "stem1");
    x = cbr(x, S, S, 3, 2, "stem2");

    // Stage 1: bottlenecks at 1/4 resolution, planes C, expansion 4.
    int ch = S;
    for (int k = 0; k < cfg.stage1_bottlenecks; ++k) {
        const std::string base = "stage1.blk" + std::to_string(k);
        const int identity = x;
        int a = cbr(x, ch, C, 1, 1, base + ".reduce");
        a = cbr(a, C, C, 3, 1, base + ".mid");
        a = cb(a, C, 4 * C, 1, 1, base + ".expand");
        const int skip = (ch != 4 * C) ? cb(identity, ch, 4 * C, 1, 1, base + ".proj") : identity;
        x = g.add_relu(g.add_add({a, skip}));
        ch = 4 * C;
    }

    std::vector<int> widths = {C, 2 * C};
    std::vector<int> branch(2);
    branch[0] = cbr(x, ch, widths[0], 3, 1, "trans1.b0");
    branch[1] = cbr(x, ch, widths[1], 3, 2, "trans1.b1");

    for (int stage = 2; stage <= 4; ++stage) {
        const int nb = stage;
        const int nmod = cfg.stage_blocks[stage - 2];
        for (int m = 0; m < nmod; ++m) {
            const std::string mbase = "stage" + std::to_string(stage) + ".m" + std::to_string(m);
            for (int i = 0; i < nb; ++i) {
                int cur = branch[i];
                for (int bb = 0; bb < cfg.blocks_per_branch; ++bb) {
                    const std::string bbase =
                        mbase + ".b" + std::to_string(i) + ".blk" + std::to_string(bb);
                    const int identity = cur;
                    int a = cbr(cur, widths[i], widths[i], 3, 1, bbase + ".conv1");
                    a = cb(a, widths[i], widths[i], 3, 1, bbase + ".conv2");
                    cur = g.add_relu(g.add_add({a, identity}));
                }
                branch[i] = cur;
            }
            // Dense fusion: every branch receives every other branch,
            // downsampled by stride-2 3x3 convs (one per octave) or
            // upsampled (nearest) and matched by a 1x1 conv.
            std::vector<int> fused(nb);
            for (int j = 0; j < nb; ++j) {
                std::vector<int> terms;
                for (int i = 0; i < nb; ++i) {
                    if (i == j) {
                        terms.push_back(branch[i]);
                        continue;
                    }
                    const std::string fbase =
                        mbase + ".fuse" + std::to_string(i) + "to" + std::to_string(j);
                    if (i < j) {
                        int cur = branch[i];
                        for (int step = 1; step <= j - i; ++step) {
                            const bool last = (step == j - i);
                            const int cout = last ? widths[j] : widths[i];
                            const std::string nm = fbase + ".down" + std::to_string(step);
                            cur = last ? cb(cur, widths[i], cout, 3, 2, nm)
                                       : cbr(cur, widths[i], cout, 3, 2, nm);
                        }
                        terms.push_back(cur);
                    } else {
                        const int up = g.add_upsample(branch[i], 1 << (i - j));
                        terms.push_back(cb(up, widths[i], widths[j], 1, 1, fbase + ".proj"));
                    }
                }
                fused[j] = g.add_relu(g.add_add(terms));
            }
            branch = fused;
        }
        if (stage < 4) {
            const int lw = widths.back();
            widths.push_back(2 * lw);
            branch.push_back(cbr(branch.back(), lw, 2 * lw, 3, 2,
                                 "trans" + std::to_string(stage) + ".b" + std::to_string(stage)));
        }
    }

    std::vector<int> terms = {branch[0]};
    for (int i = 1; i < 4; ++i) {
        const int up = g.add_upsample(branch[i], 1 << i);
        terms.push_back(cb(up, widths[i], C, 1, 1, "final_fuse.from" + std::to_string(i) + ".proj"));
    }
    const int fused = g.add_relu(g.add_add(terms));
    const int head = g.add_conv(fused, C, cfg.head_channels, 1, 1, true, "head");
    g.output = g.add_sigmoid(head);
    return g;
}

// Fan-in scaled Gaussian init for conv weights, zero biases; batch-norm
// affine starts at identity (set at construction).
void init_params(nn::Graph& g, uint64_t seed) {
    Rng rng(seed);
    for (nn::ConvParam& p : g.convs) {
        const double fan_in = static_cast<double>(p.in_ch) * p.kernel * p.kernel;
        const double stddev = std::sqrt(2.0 / fan_in);
        for (float& w : p.w) w = static_cast<float>(rng.normal() * stddev);
        for (float& b : p.b) b = 0.f;
    }
}

template <typename T>
std::vector<std::vector<T>*> learnable_ws_params(const nn::Graph& g, nn::Workspace<T>& ws) {
    std::vector<std::vector<T>*> refs;
    for (const nn::NodeDef& n : g.nodes) {
        if (n.kind == nn::OpKind::kConv) {
            refs.push_back(&ws.conv_w[n.param]);
            if (n.has_bias) refs.push_back(&ws.conv_b[n.param]);
        } else if (n.kind == nn::OpKind::kBn) {
            refs.push_back(&ws.bn_g[n.param]);
            refs.push_back(&ws.bn_b[n.param]);
        }
    }
    return refs;
}

template <typename T>
std::vector<std::vector<T>*> learnable_ws_grads(const nn::Graph& g, nn::Workspace<T>& ws) {
    std::vector<std::vector<T>*> refs;
    for (const nn::NodeDef& n : g.nodes) {
        if (n.kind == nn::OpKind::kConv) {
            refs.push_back(&ws.conv_w_g[n.param]);
            if (n.has_bias) refs.push_back(&ws.conv_b_g[n.param]);
        } else if (n.kind == nn::OpKind::kBn) {
            refs.push_back(&ws.bn_g_g[n.param]);
            refs.push_back(&ws.bn_b_g[n.param]);
        }
    }
    return refs;
}

template <typename T>
nn::Tens<T> batch_to_tens(const std::vector<TrainSample>& batch) {
    const TensorGrid& first = batch.front().image;
    nn::Tens<T> input;
    input.resize(static_cast<int>(batch.size()), first.channels(), first.height(), first.width());
    for (size_t s = 0; s < batch.size(); ++s) {
        const TensorGrid& img = batch[s].image;
        T* dst = input.sample(static_cast<int>(s));
        for (size_t j = 0; j < img.size(); ++j) dst[j] = static_cast<T>(img.data()[j]);
    }
    return input;
}

template <typename T>
NetOutputOf<T> slice_output(const nn::Tens<T>& y, int s) {
    NetOutputOf<T> o;
    o.heatmap = BasicGrid<T>(1, y.h, y.w);
    o.size = BasicGrid<T>(2, y.h, y.w);
    o.offset = BasicGrid<T>(2, y.h, y.w);
    const size_t plane = static_cast<size_t>(y.h) * y.w;
    const T* src = y.sample(s);
    std::copy(src, src + plane, o.heatmap.data());
    std::copy(src + plane, src + 3 * plane, o.size.data());
    std::copy(src + 3 * plane, src + 5 * plane, o.offset.data());
    return o;
}

void validate_batch(const std::vector<TrainSample>& batch, const ModelConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("train: batch must be non-empty");
    const TensorGrid& first = batch.front().image;
    for (const TrainSample& s : batch) {
        if (s.image.channels() != cfg.input_channels)
            throw std::invalid_argument("train: image channel count does not match the model");
        if (s.image.height() != first.height() || s.image.width() != first.width())
            throw std::invalid_argument("train: batch images must share dimensions");
        if (s.image.height() % 32 != 0 || s.image.width() % 32 != 0)
            throw std::invalid_argument("train: image dims must be divisible by 32");
    }
}

}  // namespace

struct Model::Impl {
    ModelConfig cfg;
    nn::Graph graph;
    nn::Workspace<float> ws;  // reused by train_step
};

Model::Model(const ModelConfig& cfg, uint64_t seed) : impl_(std::make_unique<Impl>()) {
    cfg.validate();
    impl_->cfg = cfg;
    impl_->graph = build_graph(cfg);
    init_params(impl_->graph, seed);
}

Model::Model(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Model::~Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;

Model Model::clone() const {
    auto copy = std::make_unique<Impl>();
    copy->cfg = impl_->cfg;
    copy->graph = impl_->graph;
    return Model(std::move(copy));
}

const ModelConfig& Model::config() const { return impl_->cfg; }

size_t Model::parameter_count() const { return impl_->graph.learnable_count(); }

std::vector<Model::ParamView> Model::parameters() {
    std::vector<ParamView> views;
    for (const nn::TensorRef& r : impl_->graph.learnables()) {
        views.push_back(ParamView{r.name, r.data->data(), r.data->size()});
    }
    return views;
}

NetOutput Model::forward(const TensorGrid& image) const {
    if (image.channels() != impl_->cfg.input_channels)
        throw std::invalid_argument("forward: image channel count does not match the model");
    if (image.height() % 32 != 0 || image.width() % 32 != 0)
        throw std::invalid_argument("forward: input dims must be divisible by 32");

    nn::Tens<float> input;
    input.resize(1, image.channels(), image.height(), image.width());
    std::copy(image.data(), image.data() + image.size(), input.v.begin());

    nn::Workspace<float> ws;  // local: forward stays const and thread-safe
    ws.load_params(impl_->graph);
    ws.forward(impl_->graph, input, /*train_mode=*/false);
    return slice_output(ws.out[impl_->graph.output], 0);
}

LossReport Model::train_step(const std::vector<TrainSample>& batch, AdamState& state,
                             const TrainConfig& tc) {
    validate_batch(batch, impl_->cfg);
    tc.weights.validate();
    nn::Graph& g = impl_->graph;
    nn::Workspace<float>& ws = impl_->ws;

    ws.load_params(g);
    ws.forward(g, batch_to_tens<float>(batch), /*train_mode=*/true);
    ws.store_running_stats(g);

    const nn::Tens<float>& y = ws.out[g.output];
    const size_t plane = static_cast<size_t>(y.h) * y.w;
    nn::Tens<float> dy;
    dy.resize(y.n, y.c, y.h, y.w);

    LossReport agg;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (size_t s = 0; s < batch.size(); ++s) {
        NetOutput pred = slice_output(y, static_cast<int>(s));
        TotalLossResult<float> r = total_loss(pred, batch[s].targets, tc.weights);
        agg.l_h += r.report.l_h * inv_b;
        agg.l_s += r.report.l_s * inv_b;
        agg.l_offset += r.report.l_offset * inv_b;
        agg.total += r.report.total * inv_b;
        agg.n_objects += r.report.n_objects;

        float* dst = dy.sample(static_cast<int>(s));
        const float scale = static_cast<float>(inv_b);
        for (size_t j = 0; j < plane; ++j) dst[j] = r.grad.heatmap.data()[j] * scale;
        for (size_t j = 0; j < 2 * plane; ++j) dst[plane + j] = r.grad.size.data()[j] * scale;
        for (size_t j = 0; j < 2 * plane; ++j) dst[3 * plane + j] = r.grad.offset.data()[j] * scale;
    }
    if (!std::isfinite(agg.total)) {
        throw std::runtime_error("train_step: non-finite loss (l_h=" + std::to_string(agg.l_h) +
                                 " l_s=" + std::to_string(agg.l_s) +
                                 " l_offset=" + std::to_string(agg.l_offset) + ")");
    }

    ws.backward(g, dy);

    // Adaptive-moment update, bias-corrected.
    auto params = g.learnables();
    auto grads = learnable_ws_grads(g, ws);
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), {});
        state.v.assign(params.size(), {});
        for (size_t t = 0; t < params.size(); ++t) {
            state.m[t].assign(params[t].data->size(), 0.f);
            state.v[t].assign(params[t].data->size(), 0.f);
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(state.step));
    for (size_t t = 0; t < params.size(); ++t) {
        std::vector<float>& w = *params[t].data;
        const std::vector<float>& gr = *grads[t];
        std::vector<float>& m = state.m[t];
        std::vector<float>& v = state.v[t];
        for (size_t j = 0; j < w.size(); ++j) {
            m[j] = tc.beta1 * m[j] + (1.f - tc.beta1) * gr[j];
            v[j] = tc.beta2 * v[j] + (1.f - tc.beta2) * gr[j] * gr[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= static_cast<float>(tc.lr * mhat / (std::sqrt(vhat) + tc.eps));
        }
    }
    return agg;
}

double Model::batch_loss_f64(const std::vector<TrainSample>& batch, const LossWeights& w,
                             size_t perturb_index, double delta) const {
    validate_batch(batch, impl_->cfg);
    const nn::Graph& g = impl_->graph;
    nn::Workspace<double> ws;
    ws.load_params(g);
    if (perturb_index != SIZE_MAX) {
        auto refs = learnable_ws_params(g, ws);
        size_t idx = perturb_index;
        for (auto* t : refs) {
            if (idx < t->size()) {
                (*t)[idx] += delta;
                idx = SIZE_MAX;
                break;
            }
            idx -= t->size();
        }
        if (idx != SIZE_MAX) throw std::invalid_argument("batch_loss_f64: parameter index out of range");
    }
    ws.forward(g, batch_to_tens<double>(batch), /*train_mode=*/true);

    const nn::Tens<double>& y = ws.out[g.output];
    double total = 0;
    for (size_t s = 0; s < batch.size(); ++s) {
        NetOutputOf<double> pred = slice_output(y, static_cast<int>(s));
        TargetSetOf<double> tg;
        tg.heatmap = batch[s].targets.heatmap.cast<double>();
        tg.size_map = batch[s].targets.size_map.cast<double>();
        tg.offset_map = batch[s].targets.offset_map.cast<double>();
        tg.mask = batch[s].targets.mask.cast<double>();
        tg.n_objects = batch[s].targets.n_objects;
        total += total_loss(pred, tg, w).report.total;
    }
    return total / static_cast<double>(batch.size());
}

std::vector<double> Model::batch_param_gradients_f64(const std::vector<TrainSample>& batch,
                                                     const LossWeights& w) const {
    validate_batch(batch, impl_->cfg);
    const nn::Graph& g = impl_->graph;
    nn::Workspace<double> ws;
    ws.load_params(g);
    ws.forward(g, batch_to_tens<double>(batch), /*train_mode=*/true);

    const nn::Tens<double>& y = ws.out[g.output];
    const size_t plane = static_cast<size_t>(y.h) * y.w;
    nn::Tens<double> dy;
    dy.resize(y.n, y.c, y.h, y.w);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (size_t s = 0; s < batch.size(); ++s) {
        NetOutputOf<double> pred = slice_output(y, static_cast<int>(s));
        TargetSetOf<double> tg;
        tg.heatmap = batch[s].targets.heatmap.cast<double>();
        tg.size_map = batch[s].targets.size_map.cast<double>();
        tg.offset_map = batch[s].targets.offset_map.cast<double>();
        tg.mask = batch[s].targets.mask.cast<double>();
        tg.n_objects = batch[s].targets.n_objects;
        TotalLossResult<double> r = total_loss(pred, tg, w);
        double* dst = dy.sample(static_cast<int>(s));
        for (size_t j = 0; j < plane; ++j) dst[j] = r.grad.heatmap.data()[j] * inv_b;
        for (size_t j = 0; j < 2 * plane; ++j) dst[plane + j] = r.grad.size.data()[j] * inv_b;
        for (size_t j = 0; j < 2 * plane; ++j) dst[3 * plane + j] = r.grad.offset.data()[j] * inv_b;
    }
    ws.backward(g, dy);

    std::vector<double> flat;
    flat.reserve(g.learnable_count());
    for (auto* t : learnable_ws_grads(g, ws)) flat.insert(flat.end(), t->begin(), t->end());
    return flat;
}

// ---------------------------------------------------------------------------
// Checkpoint format "HRCN": see model.hpp. All integers little-endian.

namespace {

constexpr char kMagic[4] = {'H', 'R', 'C', 'N'};
constexpr uint16_t kVersion = 1;

enum ConfigTag : uint8_t {
    kTagBaseChannels = 1,
    kTagInputChannels = 2,
    kTagHeadChannels = 3,
    kTagStage1Bottlenecks = 4,
    kTagBlocksPerBranch = 5,
    kTagStage2Blocks = 6,
    kTagStage3Blocks = 7,
    kTagStage4Blocks = 8,
};

}  // namespace

void Model::save(const std::string& path) const {
    nn::Graph& g = impl_->graph;
    std::string blob;
    for (const nn::TensorRef& r : g.learnables()) {
        for (float f : *r.data) binio::put_f32(blob, f);
    }
    for (const nn::TensorRef& r : g.buffers()) {
        for (float f : *r.data) binio::put_f32(blob, f);
    }

    std::string out;
    out.append(kMagic, 4);
    binio::put_u16(out, kVersion);
    const ModelConfig& c = impl_->cfg;
    const std::vector<std::pair<uint8_t, int32_t>> fields = {
        {kTagBaseChannels, c.base_channels},     {kTagInputChannels, c.input_channels},
        {kTagHeadChannels, c.head_channels},     {kTagStage1Bottlenecks, c.stage1_bottlenecks},
        {kTagBlocksPerBranch, c.blocks_per_branch}, {kTagStage2Blocks, c.stage_blocks[0]},
        {kTagStage3Blocks, c.stage_blocks[1]},   {kTagStage4Blocks, c.stage_blocks[2]},
    };
    binio::put_u16(out, static_cast<uint16_t>(fields.size()));
    for (auto [tag, value] : fields) {
        out.push_back(static_cast<char>(tag));
        binio::put_u32(out, static_cast<uint32_t>(value));
    }
    binio::put_u64(out, blob.size() / 4);
    out += blob;
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(blob.data()), static_cast<uInt>(blob.size())));
    binio::put_u32(out, crc);

    binio::write_file(path, out);
}

Model Model::load(const std::string& path) {
    const std::string data = binio::read_file(path);
    binio::Reader r{data, 0, path};

    r.need(4);
    if (std::memcmp(data.data(), kMagic, 4) != 0)
        throw FormatError("not a checkpoint file (bad magic): " + path);
    r.pos = 4;
    const uint16_t version = r.u16();
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + ": " + path);

    ModelConfig cfg;
    const uint16_t nfields = r.u16();
    for (uint16_t i = 0; i < nfields; ++i) {
        const uint8_t tag = r.u8();
        const int32_t value = static_cast<int32_t>(r.u32());
        switch (tag) {
            case kTagBaseChannels: cfg.base_channels = value; break;
            case kTagInputChannels: cfg.input_channels = value; break;
            case kTagHeadChannels: cfg.head_channels = value; break;
            case kTagStage1Bottlenecks: cfg.stage1_bottlenecks = value; break;
            case kTagBlocksPerBranch: cfg.blocks_per_branch = value; break;
            case kTagStage2Blocks: cfg.stage_blocks[0] = value; break;
            case kTagStage3Blocks: cfg.stage_blocks[1] = value; break;
            case kTagStage4Blocks: cfg.stage_blocks[2] = value; break;
            default:
                throw FormatError("unknown checkpoint config tag " + std::to_string(tag) + ": " + path);
        }
    }
    cfg.validate();

    Model model(cfg, /*seed=*/0);
    nn::Graph& g = model.impl_->graph;

    size_t expected = 0;
    for (const nn::TensorRef& t : g.learnables()) expected += t.data->size();
    for (const nn::TensorRef& t : g.buffers()) expected += t.data->size();

    const uint64_t count = r.u64();
    if (count != expected) {
        throw FormatError("checkpoint parameter count mismatch (file " + std::to_string(count) +
                          ", model " + std::to_string(expected) + "): " + path);
    }
    r.need(count * 4 + 4);
    const uint32_t crc = static_cast<uint32_t>(crc32(
        0L, reinterpret_cast<const Bytef*>(data.data() + r.pos), static_cast<uInt>(count * 4)));
    for (const nn::TensorRef& t : g.learnables()) {
        for (float& f : *t.data) f = r.f32();
    }
    for (const nn::TensorRef& t : g.buffers()) {
        for (float& f : *t.data) f = r.f32();
    }
    const uint32_t stored_crc = r.u32();
    if (crc != stored_crc) throw FormatError("checkpoint CRC mismatch: " + path);
    return model;
}

Model Model::load(const std::string& path, const ModelConfig& expected) {
    Model m = load(path);
    if (!(m.config() == expected)) {
        throw FormatError("checkpoint config mismatch (requested base_channels=" +
                          std::to_string(expected.base_channels) + ", file has " +
                          std::to_string(m.config().base_channels) + "): " + path);
    }
    return m;
}

}  // namespace hrcdet
