// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "layers/module.hpp"

namespace phonebench {

// Time-major [T x d] attention layers.

class MHSALayer {
 public:
  MHSALayer(std::size_t d, std::size_t heads, AttentionRange range, Rng& rng);

  // ctx.range_override, when set, replaces the configured range.
  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  // Attention weights [H x T x T] for inspection.
  Tensor attention(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamCollector& out);

  AttentionRange effective_range(const ForwardContext& ctx) const {
    return ctx.range_override ? *ctx.range_override : range;
  }

  std::size_t heads;
  AttentionRange range;
  Linear query, key, value, output;
};

// x + MHSA(LN x), then + FF(LN .) with a 4d relu hidden layer.
class TransformerLayer {
 public:
  TransformerLayer(std::size_t d, std::size_t heads, AttentionRange range, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamCollector& out);

  LayerNorm attn_norm;
  MHSALayer attn;
  LayerNorm ff_norm;
  FeedForward ff;
};

// LN -> pointwise d->2d -> GLU -> depthwise k -> BatchNorm -> swish -> pointwise.
class ConformerConvModule {
 public:
  ConformerConvModule(std::size_t d, std::size_t kernel, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamCollector& out);

  std::size_t kernel;
  LayerNorm norm;
  Linear pointwise_in;
  Tensor depthwise;       // [d x 1 x k]
  Tensor depthwise_bias;  // [d]
  BatchNorm batch_norm;
  Linear pointwise_out;
};

// Half-step FF, MHSA, conv module, half-step FF, final LN; each residual.
class ConformerLayer {
 public:
  ConformerLayer(std::size_t d, std::size_t heads, AttentionRange range, std::size_t kernel, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamCollector& out);

  LayerNorm ff1_norm;
  FeedForward ff1;
  LayerNorm attn_norm;
  MHSALayer attn;
  ConformerConvModule conv;
  LayerNorm ff2_norm;
  FeedForward ff2;
  LayerNorm final_norm;
};

}  // namespace phonebench
