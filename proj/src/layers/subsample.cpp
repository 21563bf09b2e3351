// SPDX-License-Identifier: Apache-2.0
#include "layers/subsample.hpp"

#include "core/error.hpp"

namespace phonebench {

namespace {

// relu(x + b[c]) on x[C x F x T], then zero time steps >= valid.
Tensor bias_relu_mask(const Tensor& x, const Tensor& b, std::size_t valid) {
  const std::size_t c = x.dim(0), f = x.dim(1), len = x.dim(2);
  Tensor y = ops::relu(ops::add_channel_bias(ops::reshape(x, {c, f * len}), b));
  y = ops::mask_cols(ops::reshape(y, {c * f, len}), valid);
  return ops::reshape(y, {c, f, len});
}

}  // namespace

SubsampleFrontend::SubsampleFrontend(std::size_t mels, std::size_t ch, std::size_t d, Rng& rng)
    : n_mels(mels), channels(ch) {
  if (mels < 1 || ch < 1 || d < 1) fail(ErrorCode::Config, "subsampler dimensions must be positive");
  conv1 = init_uniform({ch, 1, 3, 3}, 9, rng);
  bias1 = init_uniform({ch}, 9, rng);
  conv2 = init_uniform({ch, ch, 3, 3}, 9 * ch, rng);
  bias2 = init_uniform({ch}, 9 * ch, rng);
  project = Linear(ch * reduced_mels(mels), d, true, rng);
}

Tensor SubsampleFrontend::forward(const Tensor& fbank, const ForwardContext& ctx) const {
  if (fbank.rank() != 2 || fbank.dim(0) != n_mels) {
    fail(ErrorCode::Dimension, "subsampler expects [" + std::to_string(n_mels) + " x T] features, got " +
                                   shape_str(fbank.shape()));
  }
  const std::size_t len = fbank.dim(1);
  const std::size_t valid = ctx.valid_frames(len);
  if (valid < kMinFrames) {
    fail(ErrorCode::TooShort, "sequence of " + std::to_string(valid) + " frames is shorter than the minimum " +
                                  std::to_string(kMinFrames));
  }
  Tensor x = ops::reshape(ops::mask_cols(fbank, valid), {1, n_mels, len});
  Tensor h = bias_relu_mask(ops::conv2d(x, conv1, 2, 1), bias1, stage_length(valid));
  h = bias_relu_mask(ops::conv2d(h, conv2, 2, 1), bias2, output_length(valid));
  return project.forward(ops::flatten_time_major(h));
}

void SubsampleFrontend::collect(const std::string& prefix, ParamCollector& out) {
  out.add(prefix + ".conv1", conv1);
  out.add(prefix + ".bias1", bias1);
  out.add(prefix + ".conv2", conv2);
  out.add(prefix + ".bias2", bias2);
  project.collect(prefix + ".project", out);
}

}  // namespace phonebench
