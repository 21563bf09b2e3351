// SPDX-License-Identifier: Apache-2.0
#include "harness/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace phonebench {

std::vector<TimingPoint> time_inference(const Model& model, const BenchConfig& cfg) {
  if (cfg.batch == 0 || cfg.repeats == 0) fail(ErrorCode::Config, "bench batch and repeats must be positive");
  NoGradGuard guard;
  Rng rng(cfg.seed);
  const std::size_t d = model.config().width;
  std::vector<TimingPoint> out;
  for (std::size_t frames : cfg.input_frames) {
    if (frames < SubsampleFrontend::kMinFrames) {
      fail(ErrorCode::TooShort, "bench length " + std::to_string(frames) + " is below the frontend minimum");
    }
    const std::size_t enc = SubsampleFrontend::output_length(frames);
    std::vector<Tensor> inputs;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      std::vector<double> x(enc * d);
      for (auto& v : x) v = rng.normal();
      inputs.push_back(Tensor::from({enc, d}, std::move(x)));
    }
    const auto run = [&] {
      const auto t0 = std::chrono::steady_clock::now();
      for (const auto& x : inputs) model.encode(x);
      return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };
    for (std::size_t w = 0; w < cfg.warmup; ++w) run();
    TimingPoint p{frames, enc, 0.0, {}};
    for (std::size_t r = 0; r < cfg.repeats; ++r) p.samples.push_back(run() / static_cast<double>(cfg.batch));
    std::vector<double> sorted = p.samples;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    p.ms_per_sequence = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    out.push_back(std::move(p));
  }
  return out;
}

double fit_scaling_exponent(std::span<const double> lengths, std::span<const double> times) {
  if (lengths.size() != times.size()) fail(ErrorCode::InvalidArgument, "lengths and times differ in size");
  if (lengths.size() < 4) fail(ErrorCode::InvalidArgument, "scaling fit needs at least four points");
  double lo = lengths[0], hi = lengths[0];
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (!(lengths[i] > 0.0) || !(times[i] > 0.0)) fail(ErrorCode::InvalidArgument, "scaling fit needs positive data");
    lo = std::min(lo, lengths[i]);
    hi = std::max(hi, lengths[i]);
  }
  if (hi < 8.0 * lo) fail(ErrorCode::InvalidArgument, "lengths must span at least a factor of eight");
  const double n = static_cast<double>(lengths.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    const double x = std::log(lengths[i]), y = std::log(times[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace phonebench
