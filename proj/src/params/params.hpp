// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "models/config.hpp"

namespace phonebench {

struct ParamComponent {
  std::string name;
  std::uint64_t count;
};

// Closed-form trainable-scalar counts. Per-layer formulas at width d:
//   subsampler      10C + 9C^2 + C + (C * mels/4) d + d   (C channels)
//   DS conv layer   dk + d^2 + d + 2d
//   full conv layer d^2 k + d + 2d
//   SE module       2 d b + b + d                           (b = max(1, d/rho))
//   BiLSTM layer    2 * 4 (d h + h^2 + h)                   (h = d/2)
//   MHSA            4d^2 + 4d
//   Transformer     MHSA + (8d^2 + 5d) + 4d
//   Conformer       23d^2 + 30d + dk
//   classifier      37d + 37
struct ParamBreakdown {
  std::vector<ParamComponent> components;
  std::uint64_t total = 0;
};

ParamBreakdown count_params_breakdown(const ArchConfig& cfg);
// Accepts depth 0 (frontend + classifier only); other fields are validated.
std::uint64_t count_params(const ArchConfig& cfg);

std::uint64_t mhsa_params(std::uint64_t d);
std::uint64_t encoder_layer_params(const ArchConfig& cfg);

struct ParamBudget {
  std::uint64_t target = 5'000'000;
  double tolerance = 0.03;
};

// Largest width (a multiple of the head count for attention models, even for
// LSTM) whose count stays within target * (1 + tolerance).
std::size_t solve_width(ArchConfig cfg, const ParamBudget& budget);

}  // namespace phonebench
