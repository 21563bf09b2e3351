// SPDX-License-Identifier: Apache-2.0
#include "layers/attention.hpp"

#include <cmath>

#include "core/error.hpp"

namespace phonebench {

MHSALayer::MHSALayer(std::size_t d, std::size_t h, AttentionRange r, Rng& rng)
    : heads(h), range(r) {
  if (h == 0 || d % h != 0) {
    fail(ErrorCode::Config, "attention width " + std::to_string(d) + " is not divisible by " + std::to_string(h) +
                                " heads");
  }
  query = Linear(d, d, true, rng);
  key = Linear(d, d, true, rng);
  value = Linear(d, d, true, rng);
  output = Linear(d, d, true, rng);
}

Tensor MHSALayer::attention(const Tensor& x, const ForwardContext& ctx) const {
  const std::size_t len = x.dim(0), d = x.dim(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d / heads));
  Tensor q = ops::split_heads(query.forward(x), heads);
  Tensor k = ops::split_heads(key.forward(x), heads);
  Tensor scores = ops::scale(ops::bmm_nt(q, k), scale);
  return ops::softmax_masked(scores, BandMask(len, effective_range(ctx)), ctx.valid_frames(len));
}

Tensor MHSALayer::forward(const Tensor& x, const ForwardContext& ctx) const {
  Tensor p = attention(x, ctx);
  Tensor v = ops::split_heads(value.forward(x), heads);
  return output.forward(ops::merge_heads(ops::bmm(p, v)));
}

void MHSALayer::collect(const std::string& prefix, ParamCollector& out) {
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
}

TransformerLayer::TransformerLayer(std::size_t d, std::size_t heads, AttentionRange range, Rng& rng)
    : attn_norm(d), attn(d, heads, range, rng), ff_norm(d), ff(d, 4 * d, FeedForward::Activation::Relu, rng) {}

Tensor TransformerLayer::forward(const Tensor& x, const ForwardContext& ctx) const {
  Tensor y = ops::add(x, attn.forward(attn_norm.forward(x), ctx));
  return ops::add(y, ff.forward(ff_norm.forward(y)));
}

void TransformerLayer::collect(const std::string& prefix, ParamCollector& out) {
  attn_norm.collect(prefix + ".attn_norm", out);
  attn.collect(prefix + ".attn", out);
  ff_norm.collect(prefix + ".ff_norm", out);
  ff.collect(prefix + ".ff", out);
}

ConformerConvModule::ConformerConvModule(std::size_t d, std::size_t k, Rng& rng)
    : kernel(k), norm(d), pointwise_in(d, 2 * d, true, rng), batch_norm(d) {
  if (k == 0 || k % 2 == 0) {
    fail(ErrorCode::Config, "conformer kernel size must be odd and positive, got " + std::to_string(k));
  }
  depthwise = init_uniform({d, 1, k}, k, rng);
  depthwise_bias = init_uniform({d}, k, rng);
  pointwise_out = Linear(d, d, true, rng);
}

Tensor ConformerConvModule::forward(const Tensor& x, const ForwardContext& ctx) const {
  const std::size_t d = x.dim(1);
  const std::size_t valid = ctx.valid_frames(x.dim(0));
  Tensor h = ops::glu(pointwise_in.forward(norm.forward(x)));
  Tensor c = ops::mask_cols(ops::transpose(h), valid);
  c = ops::add_channel_bias(ops::conv1d(c, depthwise, 1, (kernel - 1) / 2, d), depthwise_bias);
  c = ops::swish(batch_norm.forward(c, ctx));
  return pointwise_out.forward(ops::transpose(c));
}

void ConformerConvModule::collect(const std::string& prefix, ParamCollector& out) {
  norm.collect(prefix + ".norm", out);
  pointwise_in.collect(prefix + ".pointwise_in", out);
  out.add(prefix + ".depthwise", depthwise);
  out.add(prefix + ".depthwise_bias", depthwise_bias);
  batch_norm.collect(prefix + ".batch_norm", out);
  pointwise_out.collect(prefix + ".pointwise_out", out);
}

ConformerLayer::ConformerLayer(std::size_t d, std::size_t heads, AttentionRange range, std::size_t kernel, Rng& rng)
    : ff1_norm(d),
      ff1(d, 4 * d, FeedForward::Activation::Swish, rng),
      attn_norm(d),
      attn(d, heads, range, rng),
      conv(d, kernel, rng),
      ff2_norm(d),
      ff2(d, 4 * d, FeedForward::Activation::Swish, rng),
      final_norm(d) {}

Tensor ConformerLayer::forward(const Tensor& x, const ForwardContext& ctx) const {
  Tensor y = ops::add(x, ops::scale(ff1.forward(ff1_norm.forward(x)), 0.5));
  y = ops::add(y, attn.forward(attn_norm.forward(y), ctx));
  y = ops::add(y, conv.forward(y, ctx));
  y = ops::add(y, ops::scale(ff2.forward(ff2_norm.forward(y)), 0.5));
  return final_norm.forward(y);
}

void ConformerLayer::collect(const std::string& prefix, ParamCollector& out) {
  ff1_norm.collect(prefix + ".ff1_norm", out);
  ff1.collect(prefix + ".ff1", out);
  attn_norm.collect(prefix + ".attn_norm", out);
  attn.collect(prefix + ".attn", out);
  conv.collect(prefix + ".conv", out);
  ff2_norm.collect(prefix + ".ff2_norm", out);
  ff2.collect(prefix + ".ff2", out);
  final_norm.collect(prefix + ".final_norm", out);
}

}  // namespace phonebench
