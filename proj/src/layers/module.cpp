// SPDX-License-Identifier: Apache-2.0
#include "layers/module.hpp"

#include <cmath>

#include "core/error.hpp"

namespace phonebench {

std::size_t ForwardContext::valid_frames(std::size_t len) const {
  if (valid == 0) return len;
  if (valid > len) {
    fail(ErrorCode::Dimension,
         "valid frame count " + std::to_string(valid) + " exceeds sequence length " + std::to_string(len));
  }
  return valid;
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double s = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-s, s);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Linear::Linear(std::size_t in, std::size_t out, bool with_bias, Rng& rng) {
  weight = init_uniform({in, out}, in, rng);
  if (with_bias) bias = init_uniform({out}, in, rng);
}

void Linear::collect(const std::string& prefix, ParamCollector& out) {
  out.add(prefix + ".weight", weight);
  if (bias.defined()) out.add(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(std::size_t d)
    : gamma(Tensor::parameter({d}, std::vector<double>(d, 1.0))),
      beta(Tensor::parameter({d}, std::vector<double>(d, 0.0))) {}

void LayerNorm::collect(const std::string& prefix, ParamCollector& out) {
  out.add(prefix + ".gamma", gamma);
  out.add(prefix + ".beta", beta);
}

BatchNorm::BatchNorm(std::size_t channels)
    : gamma(Tensor::parameter({channels}, std::vector<double>(channels, 1.0))),
      beta(Tensor::parameter({channels}, std::vector<double>(channels, 0.0))),
      running_mean(channels, 0.0),
      running_var(channels, 1.0) {}

Tensor BatchNorm::forward(const Tensor& x, const ForwardContext& ctx) const {
  if (!ctx.training) return ops::batch_norm_infer(x, running_mean, running_var, gamma, beta, eps);
  auto res = ops::batch_norm_train(x, gamma, beta, eps, ctx.valid_frames(x.dim(1)));
  if (ctx.bn_records) {
    ctx.bn_records->push_back({this, std::move(res.batch_mean), std::move(res.batch_var), res.count});
  }
  return res.output;
}

void BatchNorm::collect(const std::string& prefix, ParamCollector& out) {
  out.add(prefix + ".gamma", gamma);
  out.add(prefix + ".beta", beta);
  out.buffers.push_back({prefix + ".running_mean", &running_mean});
  out.buffers.push_back({prefix + ".running_var", &running_var});
  out.batch_norms.push_back(this);
}

void BatchNorm::commit(const std::vector<const BatchNormRecord*>& records) {
  if (records.empty()) return;
  const std::size_t ch = running_mean.size();
  std::vector<double> mean(ch, 0.0), var(ch, 0.0);
  for (const auto* r : records) {
    // Unbiased per-utterance variance, averaged over the batch.
    const double n = static_cast<double>(r->count);
    const double corr = r->count > 1 ? n / (n - 1.0) : 1.0;
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] += r->mean[c];
      var[c] += r->var[c] * corr;
    }
  }
  const double inv = 1.0 / static_cast<double>(records.size());
  for (std::size_t c = 0; c < ch; ++c) {
    running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c] * inv;
    running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c] * inv;
  }
}

FeedForward::FeedForward(std::size_t d, std::size_t hidden, Activation a, Rng& rng)
    : up(d, hidden, true, rng), down(hidden, d, true, rng), act(a) {}

Tensor FeedForward::forward(const Tensor& x) const {
  Tensor h = up.forward(x);
  h = act == Activation::Relu ? ops::relu(h) : ops::swish(h);
  return down.forward(h);
}

void FeedForward::collect(const std::string& prefix, ParamCollector& out) {
  up.collect(prefix + ".up", out);
  down.collect(prefix + ".down", out);
}

Tensor sinusoidal_positions(std::size_t len, std::size_t d) {
  std::vector<double> pe(len * d);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe[t * d + i] = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
    }
  }
  return Tensor::from({len, d}, std::move(pe));
}

}  // namespace phonebench
