// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "layers/module.hpp"

namespace phonebench {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.001;
};

struct AdamWState {
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;
};

// Decoupled weight decay followed by a bias-corrected Adam update using each
// parameter's accumulated gradient. Missing gradients count as zero.
// Throws Numeric naming the parameter when a gradient is not finite.
void adamw_step(std::span<const NamedParameter> params, AdamWState& state, double lr, const AdamWConfig& cfg);

// Rescales gradients in place so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<const NamedParameter> params, double max_norm);

// Linear warmup over `warmup` steps, then cosine decay to zero at `total`.
double learning_rate(std::size_t step, std::size_t total, std::size_t warmup, double max_lr);

}  // namespace phonebench
