// SPDX-License-Identifier: Apache-2.0
#include "rf/receptive_field.hpp"

#include <cmath>
#include <cstdio>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "models/model.hpp"

namespace phonebench {

namespace {

std::string fixed(std::size_t value, std::size_t scale, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%zu.%0*zu", value / scale, decimals, value % scale);
  return buf;
}

}  // namespace

std::string RFSpec::seconds() const {
  if (!radius) return "";
  // 40 ms per frame, kept in integer centiseconds.
  return fixed(4 * *length_frames(), 100, 2);
}

std::string RFSpec::exact_seconds() const {
  if (!radius) return "";
  const std::size_t input_frames = 4 * *length_frames() + 3;
  return fixed(10 * input_frames + 15, 1000, 3);
}

std::optional<std::size_t> layer_rf_radius(LayerKind kind, std::size_t kernel, AttentionRange range) {
  auto conv = [&] {
    if (kernel == 0 || kernel % 2 == 0) fail(ErrorCode::Config, "kernel size must be odd and positive");
    return (kernel - 1) / 2;
  };
  switch (kind) {
    case LayerKind::Conv:
      return conv();
    case LayerKind::Attention:
      if (!range.bounded()) return std::nullopt;
      return range.radius();
    case LayerKind::Conformer: {
      const std::size_t c = conv();
      if (!range.bounded()) return std::nullopt;
      return range.radius() + c;
    }
    case LayerKind::Lstm:
      return std::nullopt;
  }
  return std::nullopt;
}

RFSpec model_receptive_field(const ArchConfig& cfg) {
  cfg.validate();
  RFSpec rf;
  std::size_t total = 0;
  for (std::size_t layer = 0; layer < cfg.depth; ++layer) {
    std::optional<std::size_t> r;
    switch (cfg.arch) {
      case Arch::ContextNet:
        r = 4 * *layer_rf_radius(LayerKind::Conv, cfg.kernel, cfg.range);
        if (cfg.use_se) rf.bounded = false;
        break;
      case Arch::Lstm:
        r = layer_rf_radius(LayerKind::Lstm, cfg.kernel, cfg.range);
        break;
      case Arch::Transformer:
        r = layer_rf_radius(LayerKind::Attention, cfg.kernel, cfg.range);
        break;
      case Arch::Conformer:
        r = layer_rf_radius(LayerKind::Conformer, cfg.kernel, cfg.range);
        break;
    }
    if (!r) {
      rf.bounded = false;
      rf.radius.reset();
      return rf;
    }
    total += *r;
  }
  rf.radius = total;
  return rf;
}

std::size_t attention_range_for_kernel(std::size_t kernel, std::size_t n_conv_layers) {
  if (n_conv_layers == 0) fail(ErrorCode::InvalidArgument, "number of convolution layers must be >= 1");
  if (kernel == 0 || kernel % 2 == 0) fail(ErrorCode::Config, "kernel size must be odd and positive");
  return n_conv_layers * (kernel - 1) / 2;
}

BandMask build_band_mask(std::size_t length, AttentionRange range) {
  if (length == 0) fail(ErrorCode::InvalidArgument, "band mask length must be >= 1");
  return BandMask(length, range);
}

EmpiricalRF empirical_receptive_field(const Model& model, std::size_t input_frames, std::uint64_t seed,
                                      double threshold) {
  const std::size_t out_len = SubsampleFrontend::output_length(std::max<std::size_t>(input_frames, 1));
  if (input_frames < SubsampleFrontend::kMinFrames || out_len < 3) {
    fail(ErrorCode::Inconclusive, "probe length of " + std::to_string(input_frames) +
                                      " input frames is too short to bound a receptive field");
  }
  const std::size_t mels = model.config().n_mels;
  Rng rng(seed);
  std::vector<double> base(mels * input_frames);
  for (auto& v : base) v = rng.normal();

  NoGradGuard no_grad;
  const Tensor ref = model.forward(Tensor::from({mels, input_frames}, base));
  const std::size_t classes = ref.dim(1);

  EmpiricalRF result;
  for (std::size_t j = 0; j < out_len; ++j) {
    std::vector<double> probe = base;
    for (std::size_t m = 0; m < mels; ++m) probe[m * input_frames + 4 * j] += rng.below(2) ? 1.0 : -1.0;
    const Tensor out = model.forward(Tensor::from({mels, input_frames}, std::move(probe)));
    for (std::size_t t = 0; t < out_len; ++t) {
      double diff = 0.0;
      for (std::size_t k = 0; k < classes; ++k) {
        diff = std::max(diff, std::abs(out[t * classes + k] - ref[t * classes + k]));
      }
      if (diff <= threshold) continue;
      const std::size_t dist = t > j ? t - j : j - t;
      const bool edge = j == 0 || j == out_len - 1;
      if (edge && dist == out_len - 1) {
        result.bounded = false;
        result.radius = 0;
        return result;
      }
      result.radius = std::max(result.radius, dist);
    }
  }
  return result;
}

}  // namespace phonebench
