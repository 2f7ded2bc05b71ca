#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fan/tensor.hpp"

namespace fan {

// Differentiable primitives. Every op validates shapes up front, computes the
// forward values eagerly, and (when grad tracking is on) records a backward
// closure on the output node.

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_const(const Tensor& x, double c);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- shape ----
Tensor reshape(const Tensor& x, const Shape& new_shape);
Tensor transpose2d(const Tensor& x);
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const std::vector<Tensor>& parts);

// ---- broadcasts ----
// x: [n x d], bias: [d]
Tensor add_rowvec(const Tensor& x, const Tensor& bias);
// s: 1-element tensor added to every element of x
Tensor add_broadcast_scalar(const Tensor& x, const Tensor& s);

// ---- linear algebra ----
// a: [m x k], b: [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// add_rowvec(matmul(x, w), b)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// ---- normalization / attention pieces ----
// Numerically stabilized softmax along `axis`; slices sum to 1.
Tensor softmax(const Tensor& x, int axis);

// Last-dimension layer normalization with affine parameters gamma/beta [d].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// scores: [Lq x Lk]; masked key columns get -1e9 added before softmax, which
// underflows to exactly zero attention weight.
Tensor apply_key_padding_mask(const Tensor& scores, const std::vector<bool>& key_mask);

// Row lookup: out[i] = table[ids[i]]. Gradient scatter-adds into the table.
Tensor embedding(const std::vector<int>& ids, const Tensor& table);

struct MhaWeights {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

// Attention weights captured during a forward pass, for inspection only.
struct AttentionProbe {
    int heads = 0;
    int lq = 0;
    int lk = 0;
    // heads entries, each row-major [lq x lk]
    std::vector<std::vector<double>> weights;
};

// Scaled dot-product multi-head attention with per-head dim D/heads and a
// final output projection. q: [Lq x D], k/v: [Lk x D].
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MhaWeights& w, int heads,
                            const std::vector<bool>* key_padding_mask = nullptr,
                            AttentionProbe* probe = nullptr);

// ---- spatial ----
// x: [h x w x c_in], kernel: [kh x kw x c_in x c_out]
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding);

// x: [h x w x c] or [h x w]; align-corners=false sampling.
Tensor bilinear_upsample(const Tensor& x, int out_h, int out_w);

// Fixed 2D sinusoidal embedding, [h*w x dim]; dim must be divisible by 4.
Tensor positional_embedding_2d(int h, int w, int dim);

// Fixed 1D sinusoidal embedding, [len x dim].
Tensor positional_embedding_1d(int len, int dim);

// ---- losses ----
// Mean per-element binary cross entropy on logits, log-sum-exp stabilized.
// Target values must be exactly 0 or 1.
Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets);

// ReLU activation-sign recording. While a log is installed, every relu
// forward appends one sign bit per element; two runs of the same graph are
// in the same linear region iff their logs match. The gradient checker uses
// this to discard finite-difference coordinates that step across a kink.
void set_relu_sign_log(std::vector<uint8_t>* log);

}  // namespace fan
