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
//
// Internal compute graph of the detector backbone. Private to the library;
// the public surface lives in hrcdet/model.hpp.
//
// The graph is a static DAG built once per model: nodes are created in
// topological order, so forward walks ids ascending and backward descending.
// Convolutions run as im2col + GEMM. All kernels are templated on the
// scalar type; the float instantiation is the training path and the double
// instantiation backs finite-difference verification.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hrcdet::nn {

/// Batched NCHW buffer.
template <typename T>
struct Tens {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    void resize(int n_, int c_, int h_, int w_) {
        n = n_; c = c_; h = h_; w = w_;
        v.assign(static_cast<size_t>(n) * c * h * w, T(0));
    }
    void zero() { std::fill(v.begin(), v.end(), T(0)); }
    size_t sample_size() const { return static_cast<size_t>(c) * h * w; }
    size_t size() const { return static_cast<size_t>(n) * sample_size(); }
    T* sample(int i) { return v.data() + static_cast<size_t>(i) * sample_size(); }
    const T* sample(int i) const { return v.data() + static_cast<size_t>(i) * sample_size(); }
};

/// Row-major C[m x n] = alpha * op(A) * op(B) + beta * C via BLAS.
/// A is stored (ta ? k x m : m x k), B is stored (tb ? n x k : k x n).
template <typename T>
void gemm(bool ta, bool tb, int m, int n, int k, T alpha, const T* a, const T* b,
          T beta, T* c);

template <typename T>
void im2col(const T* x, int c, int h, int w, int kernel, int stride, int pad,
            T* col, int oh, int ow);

template <typename T>
void col2im(const T* col, int c, int h, int w, int kernel, int stride, int pad,
            T* x, int oh, int ow);

enum class OpKind { kInput, kConv, kBn, kRelu, kAdd, kUpsample, kSigmoid };

struct NodeDef {
    OpKind kind = OpKind::kInput;
    std::vector<int> inputs;
    std::string name;
    int in_ch = 0, out_ch = 0;
    int kernel = 1, stride = 1;
    bool has_bias = false;
    int param = -1;  ///< index into Graph::convs or Graph::bns
    int factor = 1;  ///< upsample factor
};

struct ConvParam {
    std::string name;
    int in_ch = 0, out_ch = 0, kernel = 1;
    bool has_bias = false;
    std::vector<float> w;  ///< [out_ch][in_ch][k][k]
    std::vector<float> b;  ///< [out_ch] when has_bias
};

struct BnParam {
    std::string name;
    int ch = 0;
    std::vector<float> gamma, beta;
    std::vector<float> run_mean, run_var;
};

/// Named view of one float tensor owned by the graph.
struct TensorRef {
    std::string name;
    std::vector<float>* data;
};

struct Graph {
    std::vector<NodeDef> nodes;
    std::vector<ConvParam> convs;
    std::vector<BnParam> bns;
    int input = -1;
    int output = -1;
    int input_channels = 0;

    // Builder helpers; every new node's inputs must already exist.
    int add_input(int channels);
    int add_conv(int src, int in_ch, int out_ch, int kernel, int stride, bool bias,
                 const std::string& name);
    int add_bn(int src, int ch, const std::string& name);
    int add_relu(int src);
    int add_add(const std::vector<int>& srcs);
    int add_upsample(int src, int factor);
    int add_sigmoid(int src);

    /// Learnable tensors in canonical (node-creation) order: conv weight,
    /// conv bias, bn gamma, bn beta.
    std::vector<TensorRef> learnables();
    /// Batch-norm running statistics, same ordering scheme.
    std::vector<TensorRef> buffers();
    size_t learnable_count() const;
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

/// Per-scalar-type evaluation state: parameter copies, activations, grads.
/// load_params() must run before forward(); finite-difference callers may
/// perturb the copies in between.
template <typename T>
struct Workspace {
    std::vector<std::vector<T>> conv_w, conv_b;
    std::vector<std::vector<T>> bn_g, bn_b, bn_rm, bn_rv;
    std::vector<std::vector<T>> conv_w_g, conv_b_g, bn_g_g, bn_b_g;
    std::vector<std::vector<T>> bn_mean, bn_invstd;  // saved batch stats
    std::vector<Tens<T>> out, grad;
    std::vector<T> col;
    bool training = false;

    void load_params(const Graph& g);
    void forward(const Graph& g, const Tens<T>& input, bool train_mode);
    void backward(const Graph& g, const Tens<T>& out_grad);
    /// Copies updated running statistics back into the graph (train path).
    void store_running_stats(Graph& g) const;
};

}  // namespace hrcdet::nn
