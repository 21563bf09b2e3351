// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "layers/module.hpp"

namespace phonebench {

// Two 3x3 stride-2 convolutions over the (mel x time) plane with relu, then
// a linear map of the flattened channels to the encoder width:
//   [n_mels x T] -> [C x n_mels/2 x T1] -> [C x n_mels/4 x T2] -> [T2 x d].
// Padding is 1 on both axes, so T1 = floor((T - 1) / 2) + 1 and likewise
// T2 from T1 (ceil(T / 4) overall).
class SubsampleFrontend {
 public:
  static constexpr std::size_t kMinFrames = 7;

  SubsampleFrontend(std::size_t n_mels, std::size_t channels, std::size_t d, Rng& rng);

  // fbank[n_mels x T]; ctx.valid counts input frames.
  Tensor forward(const Tensor& fbank, const ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParamCollector& out);

  static std::size_t stage_length(std::size_t len) { return (len - 1) / 2 + 1; }
  static std::size_t output_length(std::size_t len) { return stage_length(stage_length(len)); }
  static std::size_t reduced_mels(std::size_t n_mels) { return stage_length(stage_length(n_mels)); }

  std::size_t n_mels;
  std::size_t channels;
  Tensor conv1, bias1;  // [C x 1 x 3 x 3], [C]
  Tensor conv2, bias2;  // [C x C x 3 x 3], [C]
  Linear project;       // C * reduced_mels -> d
};

}  // namespace phonebench
