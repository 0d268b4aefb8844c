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

#include "nn.hpp"

#include <cblas.h>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace hrcdet::nn {

template <>
void gemm<float>(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
                 const float* b, float beta, float* c) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a, ta ? m : k, b, tb ? k : n, beta, c, n);
}

template <>
void gemm<double>(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
                  const double* b, double beta, double* c) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                m, n, k, alpha, a, ta ? m : k, b, tb ? k : n, beta, c, n);
}

template <typename T>
void im2col(const T* x, int c, int h, int w, int kernel, int stride, int pad,
            T* col, int oh, int ow) {
    const int ohow = oh * ow;
    for (int cc = 0; cc < c; ++cc) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                T* dst = col + (static_cast<size_t>(cc) * kernel * kernel + ky * kernel + kx) * ohow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst + oy * ow, dst + (oy + 1) * ow, T(0));
                        continue;
                    }
                    const T* src_row = x + (static_cast<size_t>(cc) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[oy * ow + ox] = (ix >= 0 && ix < w) ? src_row[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, int c, int h, int w, int kernel, int stride, int pad,
            T* x, int oh, int ow) {
    const int ohow = oh * ow;
    for (int cc = 0; cc < c; ++cc) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const T* src = col + (static_cast<size_t>(cc) * kernel * kernel + ky * kernel + kx) * ohow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    T* dst_row = x + (static_cast<size_t>(cc) * h + iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst_row[ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

int Graph::add_input(int channels) {
    NodeDef n;
    n.kind = OpKind::kInput;
    n.out_ch = channels;
    n.name = "input";
    input_channels = channels;
    nodes.push_back(std::move(n));
    input = static_cast<int>(nodes.size()) - 1;
    return input;
}

int Graph::add_conv(int src, int in_ch, int out_ch, int kernel, int stride, bool bias,
                    const std::string& name) {
    ConvParam p;
    p.name = name;
    p.in_ch = in_ch;
    p.out_ch = out_ch;
    p.kernel = kernel;
    p.has_bias = bias;
    p.w.resize(static_cast<size_t>(out_ch) * in_ch * kernel * kernel);
    if (bias) p.b.resize(out_ch);
    convs.push_back(std::move(p));

    NodeDef n;
    n.kind = OpKind::kConv;
    n.inputs = {src};
    n.name = name;
    n.in_ch = in_ch;
    n.out_ch = out_ch;
    n.kernel = kernel;
    n.stride = stride;
    n.has_bias = bias;
    n.param = static_cast<int>(convs.size()) - 1;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

int Graph::add_bn(int src, int ch, const std::string& name) {
    BnParam p;
    p.name = name;
    p.ch = ch;
    p.gamma.assign(ch, 1.f);
    p.beta.assign(ch, 0.f);
    p.run_mean.assign(ch, 0.f);
    p.run_var.assign(ch, 1.f);
    bns.push_back(std::move(p));

    NodeDef n;
    n.kind = OpKind::kBn;
    n.inputs = {src};
    n.name = name;
    n.out_ch = ch;
    n.param = static_cast<int>(bns.size()) - 1;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

int Graph::add_relu(int src) {
    NodeDef n;
    n.kind = OpKind::kRelu;
    n.inputs = {src};
    n.out_ch = nodes[src].out_ch;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

int Graph::add_add(const std::vector<int>& srcs) {
    assert(!srcs.empty());
    NodeDef n;
    n.kind = OpKind::kAdd;
    n.inputs = srcs;
    n.out_ch = nodes[srcs[0]].out_ch;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

int Graph::add_upsample(int src, int factor) {
    NodeDef n;
    n.kind = OpKind::kUpsample;
    n.inputs = {src};
    n.out_ch = nodes[src].out_ch;
    n.factor = factor;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

int Graph::add_sigmoid(int src) {
    NodeDef n;
    n.kind = OpKind::kSigmoid;
    n.inputs = {src};
    n.out_ch = nodes[src].out_ch;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

std::vector<TensorRef> Graph::learnables() {
    std::vector<TensorRef> refs;
    for (const NodeDef& n : nodes) {
        if (n.kind == OpKind::kConv) {
            ConvParam& p = convs[n.param];
            refs.push_back({p.name + ".w", &p.w});
            if (p.has_bias) refs.push_back({p.name + ".b", &p.b});
        } else if (n.kind == OpKind::kBn) {
            BnParam& p = bns[n.param];
            refs.push_back({p.name + ".gamma", &p.gamma});
            refs.push_back({p.name + ".beta", &p.beta});
        }
    }
    return refs;
}

std::vector<TensorRef> Graph::buffers() {
    std::vector<TensorRef> refs;
    for (const NodeDef& n : nodes) {
        if (n.kind == OpKind::kBn) {
            BnParam& p = bns[n.param];
            refs.push_back({p.name + ".run_mean", &p.run_mean});
            refs.push_back({p.name + ".run_var", &p.run_var});
        }
    }
    return refs;
}

size_t Graph::learnable_count() const {
    size_t total = 0;
    for (const ConvParam& p : convs) total += p.w.size() + p.b.size();
    for (const BnParam& p : bns) total += p.gamma.size() + p.beta.size();
    return total;
}

// ---------------------------------------------------------------------------
// Workspace

namespace {
template <typename T>
void cast_into(const std::vector<float>& src, std::vector<T>& dst) {
    dst.resize(src.size());
    for (size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
}
}  // namespace

template <typename T>
void Workspace<T>::load_params(const Graph& g) {
    const size_t nc = g.convs.size();
    const size_t nb = g.bns.size();
    conv_w.resize(nc);
    conv_b.resize(nc);
    bn_g.resize(nb);
    bn_b.resize(nb);
    bn_rm.resize(nb);
    bn_rv.resize(nb);
    for (size_t i = 0; i < nc; ++i) {
        cast_into(g.convs[i].w, conv_w[i]);
        cast_into(g.convs[i].b, conv_b[i]);
    }
    for (size_t i = 0; i < nb; ++i) {
        cast_into(g.bns[i].gamma, bn_g[i]);
        cast_into(g.bns[i].beta, bn_b[i]);
        cast_into(g.bns[i].run_mean, bn_rm[i]);
        cast_into(g.bns[i].run_var, bn_rv[i]);
    }
}

template <typename T>
void Workspace<T>::forward(const Graph& g, const Tens<T>& input, bool train_mode) {
    training = train_mode;
    const size_t nn = g.nodes.size();
    out.resize(nn);
    bn_mean.resize(g.bns.size());
    bn_invstd.resize(g.bns.size());

    for (size_t i = 0; i < nn; ++i) {
        const NodeDef& nd = g.nodes[i];
        switch (nd.kind) {
            case OpKind::kInput: {
                out[i] = input;
                break;
            }
            case OpKind::kConv: {
                const Tens<T>& x = out[nd.inputs[0]];
                const int k = nd.kernel;
                const int pad = k / 2;
                const int oh = (x.h + 2 * pad - k) / nd.stride + 1;
                const int ow = (x.w + 2 * pad - k) / nd.stride + 1;
                Tens<T>& y = out[i];
                y.resize(x.n, nd.out_ch, oh, ow);
                const T* w = conv_w[nd.param].data();
                const int ckk = nd.in_ch * k * k;
                const int ohow = oh * ow;
                const bool direct = (k == 1 && nd.stride == 1);
                if (!direct) col.resize(static_cast<size_t>(ckk) * ohow);
                for (int s = 0; s < x.n; ++s) {
                    const T* src = x.sample(s);
                    const T* cols = src;
                    if (!direct) {
                        im2col(src, nd.in_ch, x.h, x.w, k, nd.stride, pad, col.data(), oh, ow);
                        cols = col.data();
                    }
                    gemm<T>(false, false, nd.out_ch, ohow, ckk, T(1), w, cols, T(0), y.sample(s));
                    if (nd.has_bias) {
                        const T* b = conv_b[nd.param].data();
                        T* dst = y.sample(s);
                        for (int oc = 0; oc < nd.out_ch; ++oc) {
                            const T bv = b[oc];
                            for (int j = 0; j < ohow; ++j) dst[static_cast<size_t>(oc) * ohow + j] += bv;
                        }
                    }
                }
                break;
            }
            case OpKind::kBn: {
                const Tens<T>& x = out[nd.inputs[0]];
                Tens<T>& y = out[i];
                y.resize(x.n, x.c, x.h, x.w);
                const int ch = x.c;
                const size_t plane = static_cast<size_t>(x.h) * x.w;
                const size_t m = static_cast<size_t>(x.n) * plane;
                std::vector<T>& mean = bn_mean[nd.param];
                std::vector<T>& invstd = bn_invstd[nd.param];
                mean.assign(ch, T(0));
                invstd.assign(ch, T(0));
                if (training) {
                    for (int c = 0; c < ch; ++c) {
                        double sum = 0, sq = 0;
                        for (int s = 0; s < x.n; ++s) {
                            const T* p = x.sample(s) + c * plane;
                            for (size_t j = 0; j < plane; ++j) {
                                const double v = p[j];
                                sum += v;
                                sq += v * v;
                            }
                        }
                        const double mu = sum / m;
                        const double var = std::max(0.0, sq / m - mu * mu);
                        mean[c] = static_cast<T>(mu);
                        invstd[c] = static_cast<T>(1.0 / std::sqrt(var + kBnEps));
                        // Unbiased variance feeds the running estimate.
                        const double var_u = m > 1 ? var * static_cast<double>(m) / (m - 1) : var;
                        bn_rm[nd.param][c] = static_cast<T>((1.0 - kBnMomentum) * bn_rm[nd.param][c] +
                                                            kBnMomentum * mu);
                        bn_rv[nd.param][c] = static_cast<T>((1.0 - kBnMomentum) * bn_rv[nd.param][c] +
                                                            kBnMomentum * var_u);
                    }
                } else {
                    for (int c = 0; c < ch; ++c) {
                        mean[c] = bn_rm[nd.param][c];
                        invstd[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(bn_rv[nd.param][c]) + kBnEps));
                    }
                }
                for (int c = 0; c < ch; ++c) {
                    const T mu = mean[c];
                    const T is = invstd[c];
                    const T gm = bn_g[nd.param][c];
                    const T bt = bn_b[nd.param][c];
                    for (int s = 0; s < x.n; ++s) {
                        const T* xp = x.sample(s) + c * plane;
                        T* yp = y.sample(s) + c * plane;
                        for (size_t j = 0; j < plane; ++j) yp[j] = gm * (xp[j] - mu) * is + bt;
                    }
                }
                break;
            }
            case OpKind::kRelu: {
                const Tens<T>& x = out[nd.inputs[0]];
                Tens<T>& y = out[i];
                y.resize(x.n, x.c, x.h, x.w);
                for (size_t j = 0; j < x.size(); ++j) y.v[j] = x.v[j] > T(0) ? x.v[j] : T(0);
                break;
            }
            case OpKind::kAdd: {
                const Tens<T>& x0 = out[nd.inputs[0]];
                Tens<T>& y = out[i];
                y = x0;
                for (size_t a = 1; a < nd.inputs.size(); ++a) {
                    const Tens<T>& xa = out[nd.inputs[a]];
                    assert(xa.size() == y.size());
                    for (size_t j = 0; j < y.size(); ++j) y.v[j] += xa.v[j];
                }
                break;
            }
            case OpKind::kUpsample: {
                const Tens<T>& x = out[nd.inputs[0]];
                const int f = nd.factor;
                Tens<T>& y = out[i];
                y.resize(x.n, x.c, x.h * f, x.w * f);
                for (int s = 0; s < x.n; ++s) {
                    for (int c = 0; c < x.c; ++c) {
                        const T* xp = x.sample(s) + static_cast<size_t>(c) * x.h * x.w;
                        T* yp = y.sample(s) + static_cast<size_t>(c) * y.h * y.w;
                        for (int yy = 0; yy < y.h; ++yy) {
                            const T* row = xp + static_cast<size_t>(yy / f) * x.w;
                            for (int xx = 0; xx < y.w; ++xx) yp[static_cast<size_t>(yy) * y.w + xx] = row[xx / f];
                        }
                    }
                }
                break;
            }
            case OpKind::kSigmoid: {
                const Tens<T>& x = out[nd.inputs[0]];
                Tens<T>& y = out[i];
                y.resize(x.n, x.c, x.h, x.w);
                for (size_t j = 0; j < x.size(); ++j) y.v[j] = T(1) / (T(1) + std::exp(-x.v[j]));
                break;
            }
        }
    }
}

template <typename T>
void Workspace<T>::backward(const Graph& g, const Tens<T>& out_grad) {
    assert(training && "backward requires a training-mode forward");
    const size_t nn = g.nodes.size();
    grad.resize(nn);
    for (size_t i = 0; i < nn; ++i) {
        grad[i].resize(out[i].n, out[i].c, out[i].h, out[i].w);
    }
    grad[g.output] = out_grad;

    conv_w_g.resize(g.convs.size());
    conv_b_g.resize(g.convs.size());
    for (size_t i = 0; i < g.convs.size(); ++i) {
        conv_w_g[i].assign(g.convs[i].w.size(), T(0));
        conv_b_g[i].assign(g.convs[i].b.size(), T(0));
    }
    bn_g_g.resize(g.bns.size());
    bn_b_g.resize(g.bns.size());
    for (size_t i = 0; i < g.bns.size(); ++i) {
        bn_g_g[i].assign(g.bns[i].gamma.size(), T(0));
        bn_b_g[i].assign(g.bns[i].beta.size(), T(0));
    }

    std::vector<T> dcol;
    for (int i = static_cast<int>(nn) - 1; i >= 0; --i) {
        const NodeDef& nd = g.nodes[i];
        const Tens<T>& gy = grad[i];
        switch (nd.kind) {
            case OpKind::kInput:
                break;
            case OpKind::kConv: {
                const int src = nd.inputs[0];
                const Tens<T>& x = out[src];
                Tens<T>& gx = grad[src];
                const int k = nd.kernel;
                const int pad = k / 2;
                const int oh = gy.h, ow = gy.w;
                const int ohow = oh * ow;
                const int ckk = nd.in_ch * k * k;
                const T* w = conv_w[nd.param].data();
                T* wg = conv_w_g[nd.param].data();
                const bool direct = (k == 1 && nd.stride == 1);
                if (!direct) col.resize(static_cast<size_t>(ckk) * ohow);
                dcol.resize(static_cast<size_t>(ckk) * ohow);
                for (int s = 0; s < x.n; ++s) {
                    const T* gyp = gy.sample(s);
                    const T* cols = x.sample(s);
                    if (!direct) {
                        im2col(x.sample(s), nd.in_ch, x.h, x.w, k, nd.stride, pad, col.data(), oh, ow);
                        cols = col.data();
                    }
                    // dW += dY * col^T
                    gemm<T>(false, true, nd.out_ch, ckk, ohow, T(1), gyp, cols, T(1), wg);
                    if (nd.has_bias) {
                        T* bg = conv_b_g[nd.param].data();
                        for (int oc = 0; oc < nd.out_ch; ++oc) {
                            T acc = T(0);
                            const T* r = gyp + static_cast<size_t>(oc) * ohow;
                            for (int j = 0; j < ohow; ++j) acc += r[j];
                            bg[oc] += acc;
                        }
                    }
                    // dX via dcol = W^T * dY
                    gemm<T>(true, false, ckk, ohow, nd.out_ch, T(1), w, gyp, T(0), dcol.data());
                    if (direct) {
                        T* gxp = gx.sample(s);
                        for (size_t j = 0; j < gx.sample_size(); ++j) gxp[j] += dcol[j];
                    } else {
                        col2im(dcol.data(), nd.in_ch, x.h, x.w, k, nd.stride, pad, gx.sample(s), oh, ow);
                    }
                }
                break;
            }
            case OpKind::kBn: {
                const int src = nd.inputs[0];
                const Tens<T>& x = out[src];
                Tens<T>& gx = grad[src];
                const int ch = x.c;
                const size_t plane = static_cast<size_t>(x.h) * x.w;
                const double m = static_cast<double>(x.n) * plane;
                const std::vector<T>& mean = bn_mean[nd.param];
                const std::vector<T>& invstd = bn_invstd[nd.param];
                for (int c = 0; c < ch; ++c) {
                    const T mu = mean[c];
                    const T is = invstd[c];
                    double dg = 0, db = 0;
                    for (int s = 0; s < x.n; ++s) {
                        const T* xp = x.sample(s) + c * plane;
                        const T* gp = gy.sample(s) + c * plane;
                        for (size_t j = 0; j < plane; ++j) {
                            const double xhat = (xp[j] - mu) * is;
                            dg += gp[j] * xhat;
                            db += gp[j];
                        }
                    }
                    bn_g_g[nd.param][c] += static_cast<T>(dg);
                    bn_b_g[nd.param][c] += static_cast<T>(db);
                    const double gm = bn_g[nd.param][c];
                    const double k1 = db / m;
                    const double k2 = dg / m;
                    for (int s = 0; s < x.n; ++s) {
                        const T* xp = x.sample(s) + c * plane;
                        const T* gp = gy.sample(s) + c * plane;
                        T* dst = gx.sample(s) + c * plane;
                        for (size_t j = 0; j < plane; ++j) {
                            const double xhat = (xp[j] - mu) * is;
                            dst[j] += static_cast<T>(gm * is * (gp[j] - k1 - xhat * k2));
                        }
                    }
                }
                break;
            }
            case OpKind::kRelu: {
                const int src = nd.inputs[0];
                const Tens<T>& x = out[src];
                Tens<T>& gx = grad[src];
                for (size_t j = 0; j < x.size(); ++j) {
                    if (x.v[j] > T(0)) gx.v[j] += gy.v[j];
                }
                break;
            }
            case OpKind::kAdd: {
                for (int src : nd.inputs) {
                    Tens<T>& gx = grad[src];
                    for (size_t j = 0; j < gx.size(); ++j) gx.v[j] += gy.v[j];
                }
                break;
            }
            case OpKind::kUpsample: {
                const int src = nd.inputs[0];
                const Tens<T>& x = out[src];
                Tens<T>& gx = grad[src];
                const int f = nd.factor;
                for (int s = 0; s < x.n; ++s) {
                    for (int c = 0; c < x.c; ++c) {
                        T* gxp = gx.sample(s) + static_cast<size_t>(c) * x.h * x.w;
                        const T* gyp = gy.sample(s) + static_cast<size_t>(c) * gy.h * gy.w;
                        for (int yy = 0; yy < gy.h; ++yy) {
                            for (int xx = 0; xx < gy.w; ++xx) {
                                gxp[static_cast<size_t>(yy / f) * x.w + xx / f] +=
                                    gyp[static_cast<size_t>(yy) * gy.w + xx];
                            }
                        }
                    }
                }
                break;
            }
            case OpKind::kSigmoid: {
                const int src = nd.inputs[0];
                const Tens<T>& y = out[i];
                Tens<T>& gx = grad[src];
                for (size_t j = 0; j < y.size(); ++j) {
                    gx.v[j] += gy.v[j] * y.v[j] * (T(1) - y.v[j]);
                }
                break;
            }
        }
    }
}

template <typename T>
void Workspace<T>::store_running_stats(Graph& g) const {
    for (size_t i = 0; i < g.bns.size(); ++i) {
        for (size_t c = 0; c < g.bns[i].run_mean.size(); ++c) {
            g.bns[i].run_mean[c] = static_cast<float>(bn_rm[i][c]);
            g.bns[i].run_var[c] = static_cast<float>(bn_rv[i][c]);
        }
    }
}

template struct Workspace<float>;
template struct Workspace<double>;
template void im2col<float>(const float*, int, int, int, int, int, int, float*, int, int);
template void im2col<double>(const double*, int, int, int, int, int, int, double*, int, int);
template void col2im<float>(const float*, int, int, int, int, int, int, float*, int, int);
template void col2im<double>(const double*, int, int, int, int, int, int, double*, int, int);

}  // namespace hrcdet::nn
