// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "core/rng.hpp"
#include "tensor/tensor.hpp"

namespace phonebench {

struct AugmentConfig {
  std::size_t n_freq_masks = 2;
  std::size_t freq_width_max = 15;
  std::size_t n_time_masks = 2;
  std::size_t time_width_max = 30;
};

struct AugmentMask {
  enum Axis : std::uint8_t { Freq, Time } axis;
  std::size_t start;
  std::size_t width;
};

// Frequency then time masks, each of width uniform in [0, max] clipped to the
// axis, filled with the utterance mean. Masks applied are appended to `applied`.
Tensor spec_augment(const Tensor& x, const AugmentConfig& cfg, Rng& rng, std::vector<AugmentMask>* applied = nullptr);

// Process-wide count of spec_augment invocations.
std::uint64_t spec_augment_invocations();

}  // namespace phonebench
