// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "core/rng.hpp"
#include "tensor/ops.hpp"
#include "tensor/tensor.hpp"

namespace phonebench::testing {

inline std::vector<double> random_values(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), random_values(n, rng, lo, hi));
}

inline Tensor random_param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::parameter(std::move(shape), random_values(n, rng, lo, hi));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
};

// Central differences against backward() on randomly chosen coordinates of
// each input. `f` must rebuild the graph from the current parameter values.
inline GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                  std::size_t probes_per_input, std::uint64_t seed, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  Tensor loss = f();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    analytic.emplace_back(t.grad().begin(), t.grad().end());
    if (analytic.back().empty()) analytic.back().assign(t.numel(), 0.0);
    t.zero_grad();
  }

  Rng rng(seed);
  GradCheckResult res;
  NoGradGuard guard;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto vals = inputs[k].mutable_values();
    const std::size_t n = vals.size();
    const std::size_t count = std::min(probes_per_input, n);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    for (std::size_t p = 0; p < count; ++p) {
      const std::size_t i = idx[p];
      const double orig = vals[i];
      vals[i] = orig + h;
      const double up = f().item();
      vals[i] = orig - h;
      const double down = f().item();
      vals[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / denom);
      ++res.probes;
    }
  }
  return res;
}

// Scalar loss sum_i w_i * y_i with fixed random weights, so every output
// coordinate contributes to the gradient.
inline Tensor random_projection_loss(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  const auto w = random_values(y.numel(), rng);
  return ops::weighted_sum(y, w);
}

}  // namespace phonebench::testing
