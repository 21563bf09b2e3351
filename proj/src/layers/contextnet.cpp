// SPDX-License-Identifier: Apache-2.0
#include "layers/contextnet.hpp"

#include <algorithm>

#include "core/error.hpp"

namespace phonebench {

namespace {

void require_odd_kernel(std::size_t k, const char* what) {
  if (k == 0 || k % 2 == 0) {
    fail(ErrorCode::Config, std::string(what) + ": kernel size must be odd and positive, got " + std::to_string(k));
  }
}

}  // namespace

DSConvLayer::DSConvLayer(std::size_t in, std::size_t out, std::size_t k, Rng& rng) : kernel(k), norm(out) {
  require_odd_kernel(k, "DS convolution");
  depthwise = init_uniform({in, 1, k}, k, rng);
  pointwise = init_uniform({out, in}, in, rng);
  pointwise_bias = init_uniform({out}, in, rng);
}

Tensor DSConvLayer::pre_activation(const Tensor& x, const ForwardContext& ctx) const {
  const std::size_t valid = ctx.valid_frames(x.dim(1));
  Tensor h = ops::conv1d(ops::mask_cols(x, valid), depthwise, 1, (kernel - 1) / 2, x.dim(0));
  h = ops::add_channel_bias(ops::matmul(pointwise, h), pointwise_bias);
  return norm.forward(h, ctx);
}

Tensor DSConvLayer::forward(const Tensor& x, const ForwardContext& ctx) const {
  return ops::swish(pre_activation(x, ctx));
}

void DSConvLayer::collect(const std::string& prefix, ParamCollector& out) {
  out.add(prefix + ".depthwise", depthwise);
  out.add(prefix + ".pointwise", pointwise);
  out.add(prefix + ".pointwise_bias", pointwise_bias);
  norm.collect(prefix + ".norm", out);
}

FullConvLayer::FullConvLayer(std::size_t in, std::size_t out, std::size_t k, Rng& rng) : kernel(k), norm(out) {
  require_odd_kernel(k, "convolution");
  weight = init_uniform({out, in, k}, in * k, rng);
  bias = init_uniform({out}, in * k, rng);
}

Tensor FullConvLayer::forward(const Tensor& x, const ForwardContext& ctx) const {
  const std::size_t valid = ctx.valid_frames(x.dim(1));
  Tensor h = ops::conv1d(ops::mask_cols(x, valid), weight, 1, (kernel - 1) / 2, 1);
  h = ops::add_channel_bias(h, bias);
  return ops::swish(norm.forward(h, ctx));
}

void FullConvLayer::collect(const std::string& prefix, ParamCollector& out) {
  out.add(prefix + ".weight", weight);
  out.add(prefix + ".bias", bias);
  norm.collect(prefix + ".norm", out);
}

SEModule::SEModule(std::size_t channels, std::size_t reduction, Rng& rng) {
  if (reduction == 0) fail(ErrorCode::Config, "SE reduction ratio must be positive");
  const std::size_t bottleneck = std::max<std::size_t>(1, channels / reduction);
  squeeze = Linear(channels, bottleneck, true, rng);
  excite = Linear(bottleneck, channels, true, rng);
}

Tensor SEModule::gate(const Tensor& x, const ForwardContext& ctx) const {
  const std::size_t d = x.dim(0);
  Tensor m = ops::reshape(ops::mean_time(x, ctx.valid_frames(x.dim(1))), {1, d});
  Tensor s = excite.forward(ops::swish(squeeze.forward(m)));
  return ops::reshape(ops::sigmoid(s), {d});
}

Tensor SEModule::forward(const Tensor& x, const ForwardContext& ctx) const {
  return ops::scale_channels(x, gate(x, ctx));
}

void SEModule::collect(const std::string& prefix, ParamCollector& out) {
  squeeze.collect(prefix + ".squeeze", out);
  excite.collect(prefix + ".excite", out);
}

ContextNetBlock::ContextNetBlock(const ContextNetBlockOptions& opt, Rng& rng) : options(opt) {
  if (opt.in_channels == 0 || opt.out_channels == 0) fail(ErrorCode::Config, "ContextNet block width must be positive");
  for (std::size_t i = 0; i < kLayers; ++i) {
    const std::size_t in = i == 0 ? opt.in_channels : opt.out_channels;
    if (opt.use_ds) {
      ds_layers.push_back(std::make_unique<DSConvLayer>(in, opt.out_channels, opt.kernel, rng));
    } else {
      full_layers.push_back(std::make_unique<FullConvLayer>(in, opt.out_channels, opt.kernel, rng));
    }
  }
  if (opt.use_se) se = std::make_unique<SEModule>(opt.out_channels, opt.se_reduction, rng);
  if (opt.in_channels != opt.out_channels) {
    residual = init_uniform({opt.out_channels, opt.in_channels}, opt.in_channels, rng);
  }
}

Tensor ContextNetBlock::forward(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = x;
  for (const auto& layer : ds_layers) h = layer->forward(h, ctx);
  for (const auto& layer : full_layers) h = layer->forward(h, ctx);
  if (se) h = se->forward(h, ctx);
  Tensor skip = residual.defined() ? ops::matmul(residual, x) : x;
  return ops::swish(ops::add(h, skip));
}

void ContextNetBlock::collect(const std::string& prefix, ParamCollector& out) {
  for (std::size_t i = 0; i < ds_layers.size(); ++i) ds_layers[i]->collect(prefix + ".conv" + std::to_string(i), out);
  for (std::size_t i = 0; i < full_layers.size(); ++i) {
    full_layers[i]->collect(prefix + ".conv" + std::to_string(i), out);
  }
  if (se) se->collect(prefix + ".se", out);
  if (residual.defined()) out.add(prefix + ".residual", residual);
}

}  // namespace phonebench
