// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "models/model.hpp"

namespace phonebench {

struct BenchConfig {
  std::vector<std::size_t> input_frames = {512, 1024, 2048, 4096, 8192};
  std::size_t batch = 8;
  std::size_t repeats = 3;
  std::size_t warmup = 1;
  std::uint64_t seed = 0;
};

struct TimingPoint {
  std::size_t input_frames;    // T at the 10 ms rate
  std::size_t encoder_frames;  // T' actually fed to the encoder
  double ms_per_sequence;      // median over repeats
  std::vector<double> samples; // per repeat, ms per sequence
};

// Times only the encoder stack on random [T' x d] inputs, gradients off.
std::vector<TimingPoint> time_inference(const Model& model, const BenchConfig& cfg);

// Least-squares slope of log(time) against log(T). Needs at least four points
// spanning a factor of eight, and positive times.
double fit_scaling_exponent(std::span<const double> lengths, std::span<const double> times);

}  // namespace phonebench
