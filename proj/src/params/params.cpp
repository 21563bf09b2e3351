// SPDX-License-Identifier: Apache-2.0
#include "params/params.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "layers/subsample.hpp"

namespace phonebench {

namespace {

using u64 = std::uint64_t;

u64 subsampler_params(const ArchConfig& cfg) {
  const u64 c = cfg.subsample_channels, d = cfg.width;
  const u64 f = SubsampleFrontend::reduced_mels(cfg.n_mels);
  return (9 * c + c) + (9 * c * c + c) + (c * f * d + d);
}

u64 ds_layer_params(u64 d, u64 k) { return d * k + d * d + d + 2 * d; }
u64 full_conv_layer_params(u64 d, u64 k) { return d * d * k + d + 2 * d; }
u64 se_params(u64 d, u64 rho) {
  const u64 b = std::max<u64>(1, d / rho);
  return d * b + b + b * d + d;
}

void validate_for_count(const ArchConfig& cfg) {
  if (cfg.depth == 0) {
    ArchConfig probe = cfg;
    probe.depth = 1;
    probe.validate();
  } else {
    cfg.validate();
  }
}

}  // namespace

u64 mhsa_params(u64 d) { return 4 * d * d + 4 * d; }

u64 encoder_layer_params(const ArchConfig& cfg) {
  const u64 d = cfg.width, k = cfg.kernel;
  switch (cfg.arch) {
    case Arch::ContextNet: {
      u64 n = 4 * (cfg.use_ds ? ds_layer_params(d, k) : full_conv_layer_params(d, k));
      if (cfg.use_se) n += se_params(d, cfg.se_reduction);
      return n;
    }
    case Arch::Lstm: {
      const u64 h = d / 2;
      return 2 * 4 * (d * h + h * h + h);
    }
    case Arch::Transformer:
      return mhsa_params(d) + (8 * d * d + 5 * d) + 4 * d;
    case Arch::Conformer:
      return 23 * d * d + 30 * d + d * k;
  }
  return 0;
}

ParamBreakdown count_params_breakdown(const ArchConfig& cfg) {
  validate_for_count(cfg);
  ParamBreakdown b;
  b.components.push_back({"subsampler", subsampler_params(cfg)});
  b.components.push_back({"encoder", cfg.depth * encoder_layer_params(cfg)});
  b.components.push_back({"classifier", cfg.n_classes * cfg.width + cfg.n_classes});
  for (const auto& c : b.components) b.total += c.count;
  return b;
}

u64 count_params(const ArchConfig& cfg) { return count_params_breakdown(cfg).total; }

std::size_t solve_width(ArchConfig cfg, const ParamBudget& budget) {
  if (budget.target == 0) fail(ErrorCode::InvalidArgument, "parameter budget must be positive");
  if (budget.tolerance < 0) fail(ErrorCode::InvalidArgument, "budget tolerance must be non-negative");
  const std::size_t step = is_attention(cfg.arch) ? cfg.heads : (cfg.arch == Arch::Lstm ? 2 : 1);
  if (step == 0) fail(ErrorCode::Config, "heads must be >= 1");
  const double limit = static_cast<double>(budget.target) * (1.0 + budget.tolerance);
  auto fits = [&](std::size_t multiple) {
    cfg.width = multiple * step;
    return static_cast<double>(count_params(cfg)) <= limit;
  };
  if (!fits(1)) {
    fail(ErrorCode::Infeasible, "budget " + std::to_string(budget.target) + " cannot fit " +
                                    std::string(arch_name(cfg.arch)) + " at the minimum width " +
                                    std::to_string(step));
  }
  // Counts grow at least linearly in width, so width <= limit bounds the
  // search; the second cap keeps the quadratic terms inside 64 bits.
  constexpr std::size_t kMaxWidth = std::size_t{1} << 24;
  std::size_t lo = 1;
  std::size_t hi = std::min(static_cast<std::size_t>(limit), kMaxWidth) / step + 2;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (fits(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo * step;
}

}  // namespace phonebench
