// SPDX-License-Identifier: Apache-2.0
#include "harness/optim.hpp"

#include <cmath>
#include <numbers>

#include "core/error.hpp"

namespace phonebench {

void adamw_step(std::span<const NamedParameter> params, AdamWState& state, double lr, const AdamWConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) fail(ErrorCode::Contract, "optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor.has_grad()) continue;
    for (double g : params[i].tensor.grad()) {
      if (!std::isfinite(g)) fail(ErrorCode::Numeric, "non-finite gradient in parameter " + params[i].name);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    auto w = t.mutable_values();
    const bool has = t.has_grad();
    const auto g = t.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = has ? g[k] : 0.0;
      w[k] -= lr * cfg.weight_decay * w[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
    }
  }
}

double clip_grad_norm(std::span<const NamedParameter> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      auto* node = p.tensor.node();
      for (double& g : node->grad) g *= s;
    }
  }
  return norm;
}

double learning_rate(std::size_t step, std::size_t total, std::size_t warmup, double max_lr) {
  if (total == 0) return 0.0;
  if (step < warmup) return max_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const std::size_t span = total > warmup ? total - warmup : 1;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
  return max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace phonebench
