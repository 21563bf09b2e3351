// SPDX-License-Identifier: Apache-2.0
#include "data/augment.hpp"

#include <algorithm>
#include <atomic>

#include "core/error.hpp"

namespace phonebench {

namespace {
std::atomic<std::uint64_t> g_invocations{0};
}  // namespace

std::uint64_t spec_augment_invocations() { return g_invocations.load(); }

Tensor spec_augment(const Tensor& x, const AugmentConfig& cfg, Rng& rng, std::vector<AugmentMask>* applied) {
  if (x.rank() != 2) fail(ErrorCode::Dimension, "spec_augment expects [mels x T], got " + shape_str(x.shape()));
  ++g_invocations;
  const std::size_t mels = x.dim(0), frames = x.dim(1);
  std::vector<double> v(x.values().begin(), x.values().end());
  double mean = 0.0;
  for (double a : v) mean += a;
  if (!v.empty()) mean /= static_cast<double>(v.size());

  const auto draw = [&](std::size_t count, std::size_t width_max, std::size_t extent, AugmentMask::Axis axis) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t w = std::min<std::size_t>(rng.below(width_max + 1), extent);
      const std::size_t start = rng.below(extent - w + 1);
      if (axis == AugmentMask::Freq) {
        for (std::size_t m = start; m < start + w; ++m) std::fill_n(v.begin() + m * frames, frames, mean);
      } else {
        for (std::size_t m = 0; m < mels; ++m) std::fill_n(v.begin() + m * frames + start, w, mean);
      }
      if (applied) applied->push_back({axis, start, w});
    }
  };
  draw(cfg.n_freq_masks, cfg.freq_width_max, mels, AugmentMask::Freq);
  draw(cfg.n_time_masks, cfg.time_width_max, frames, AugmentMask::Time);
  return Tensor::from(x.shape(), std::move(v));
}

}  // namespace phonebench
