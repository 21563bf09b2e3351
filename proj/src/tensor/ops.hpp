// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "core/attention_range.hpp"
#include "tensor/tensor.hpp"

// Differentiable primitives. Layouts are spelled out per op: sequence
// activations are either time-major [T x d] or channel-major [C x T].
// There is no implicit broadcasting; bias adds are explicit ops.
namespace phonebench::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

// x[T x d] + b[d] on every row.
Tensor add_row_bias(const Tensor& x, const Tensor& b);
// x[C x T] + b[C] on every column.
Tensor add_channel_bias(const Tensor& x, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
// x[T x in] . w[in x out] (+ b[out] when defined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor swish(const Tensor& x);
// x[T x 2d] -> x[:, :d] * sigmoid(x[:, d:]).
Tensor glu(const Tensor& x);

// Mean of a rank-2 tensor over `axis` (0 -> [cols], 1 -> [rows]).
Tensor mean(const Tensor& x, std::size_t axis);
// Mean over the first `valid` columns of x[C x T] -> [C].
Tensor mean_time(const Tensor& x, std::size_t valid);
// x[C x T] * s[C] on every column.
Tensor scale_channels(const Tensor& x, const Tensor& s);
// Rank-2 concatenation along `axis`.
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);

Tensor sum(const Tensor& x);
// sum_i x[i] * w[i] with constant weights.
Tensor weighted_sum(const Tensor& x, std::span<const double> w);

// Row softmax of scores[H x T x T] restricted to the band. Keys at index
// >= valid_keys are excluded for valid queries (padding). Masked entries
// receive exactly zero weight.
Tensor softmax_masked(const Tensor& scores, const BandMask& mask, std::size_t valid_keys);
Tensor softmax_masked(const Tensor& scores, const BandMask& mask);

// Per-row normalization of x[T x d] (a rank-1 x is one row).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// Per-channel affine normalization of x[C x T] with stored statistics.
Tensor batch_norm_infer(const Tensor& x, std::span<const double> running_mean,
                        std::span<const double> running_var, const Tensor& gamma,
                        const Tensor& beta, double eps);

struct BatchNormTrainResult {
  Tensor output;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // biased
  std::size_t count = 0;
};
// Normalizes with statistics over the first `valid` columns; padded columns
// come out as zeros.
BatchNormTrainResult batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                      double eps, std::size_t valid);

// Mean over the first labels.size() rows of -log softmax(logits)[label].
Tensor cross_entropy_frames(const Tensor& logits, std::span<const int> labels);

// Cross-correlation of x[C_in x T] with w[C_out x C_in/groups x k].
Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding,
              std::size_t groups);
// Cross-correlation of x[C_in x H x W] with w[C_out x C_in x kh x kw]; the
// same stride and zero padding apply to both spatial axes.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding);

// [T x d] -> [H x T x d/H] and back.
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x);
// Batched a[B x m x k] . b[B x k x n].
Tensor bmm(const Tensor& a, const Tensor& b);
// Batched a[B x m x k] . b[B x n x k]^T.
Tensor bmm_nt(const Tensor& a, const Tensor& b);

// One LSTM direction over precomputed input projections xproj[T x 4h]
// (gate blocks i, f, g, o) with recurrent weights w_hh[h x 4h], zero initial
// state. Only the first `valid` frames are processed; later rows are zero.
Tensor lstm_scan(const Tensor& xproj, const Tensor& w_hh, std::size_t valid, bool reverse);

// Zero rows (time-major) or columns (channel-major) at index >= valid.
Tensor mask_rows(const Tensor& x, std::size_t valid);
Tensor mask_cols(const Tensor& x, std::size_t valid);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
// x[C x F x T] -> [T x C*F] with column index c*F + f.
Tensor flatten_time_major(const Tensor& x);

}  // namespace phonebench::ops
