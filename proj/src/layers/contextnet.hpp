// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <memory>

#include "layers/module.hpp"

namespace phonebench {

// Channel-major [d x T] sequence layers used by the convolutional encoder.

// depthwise(k, no bias) -> pointwise(bias) -> BatchNorm -> swish.
class DSConvLayer {
 public:
  DSConvLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  // Output before the final swish.
  Tensor pre_activation(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamCollector& out);

  std::size_t kernel;
  Tensor depthwise;       // [d_in x 1 x k]
  Tensor pointwise;       // [d_out x d_in]
  Tensor pointwise_bias;  // [d_out]
  BatchNorm norm;
};

// Full convolution of kernel k (bias) -> BatchNorm -> swish; the ablation
// replacement for one DS pair.
class FullConvLayer {
 public:
  FullConvLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamCollector& out);

  std::size_t kernel;
  Tensor weight;  // [d_out x d_in x k]
  Tensor bias;    // [d_out]
  BatchNorm norm;
};

// Squeeze-and-excitation over the valid frames of a sequence.
class SEModule {
 public:
  SEModule(std::size_t channels, std::size_t reduction, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  // Per-channel gate in (0, 1).
  Tensor gate(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamCollector& out);

  Linear squeeze;  // d -> d / reduction
  Linear excite;   // d / reduction -> d
};

struct ContextNetBlockOptions {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 5;
  bool use_ds = true;
  bool use_se = true;
  std::size_t se_reduction = 8;
};

// Four conv layers, optional SE, residual; out = swish(SE(conv(x)) + res(x)).
class ContextNetBlock {
 public:
  static constexpr std::size_t kLayers = 4;

  ContextNetBlock(const ContextNetBlockOptions& opt, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamCollector& out);

  ContextNetBlockOptions options;
  // First layer maps in_channels -> out_channels when they differ.
  std::vector<std::unique_ptr<DSConvLayer>> ds_layers;
  std::vector<std::unique_ptr<FullConvLayer>> full_layers;
  std::unique_ptr<SEModule> se;
  Tensor residual;  // [out x in] pointwise projection, undefined for identity
};

}  // namespace phonebench
