// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "core/attention_range.hpp"
#include "models/config.hpp"

namespace phonebench {

class Model;

// Receptive field in subsampled (40 ms) frames, one side. `radius` is the
// finite part contributed by convolutions and bands; `bounded` is false when
// a global stage (SE, recurrence) lets every frame reach every output. An
// LSTM has no finite part at all.
struct RFSpec {
  std::optional<std::size_t> radius;
  bool bounded = true;

  std::optional<std::size_t> length_frames() const {
    if (!radius) return std::nullopt;
    return 2 * *radius + 1;
  }
  // length_frames * 40 ms, formatted with two decimals ("2.60"); empty when
  // there is no finite part.
  std::string seconds() const;
  // Span in input terms: (4 * length + 3) input frames at 10 ms plus the
  // extra 15 ms of the last 25 ms analysis window.
  std::string exact_seconds() const;
};

enum class LayerKind { Conv, Attention, Conformer, Lstm };

// One-sided radius contributed by a single layer; nullopt when unbounded.
std::optional<std::size_t> layer_rf_radius(LayerKind kind, std::size_t kernel, AttentionRange range);

RFSpec model_receptive_field(const ArchConfig& cfg);

// Band radius matching n stacked convolutions of kernel k: n (k - 1) / 2.
std::size_t attention_range_for_kernel(std::size_t kernel, std::size_t n_conv_layers);

BandMask build_band_mask(std::size_t length, AttentionRange range);

struct EmpiricalRF {
  bool bounded = true;
  std::size_t radius = 0;  // meaningful when bounded
};

// Perturbs each input frame 4j (which the frontend maps to output frame j
// alone) by +-1 on every mel bin and records the farthest output frame whose
// logits move by more than `threshold`. Reports unbounded when an edge probe
// reaches the opposite edge.
EmpiricalRF empirical_receptive_field(const Model& model, std::size_t input_frames, std::uint64_t seed,
                                      double threshold = 1e-9);

}  // namespace phonebench
