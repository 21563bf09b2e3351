// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "tensor/tensor.hpp"

namespace phonebench {

struct FbankConfig {
  double sample_rate = 16000.0;
  double window_ms = 25.0;
  double stride_ms = 10.0;
  std::size_t n_mels = 80;
  std::size_t fft_size = 512;
  double low_hz = 0.0;
  double high_hz = 8000.0;
  double log_floor = 1e-10;

  std::size_t window_samples() const;
  std::size_t stride_samples() const;
  // 1 + floor((n - window) / stride); zero when n < window.
  std::size_t frame_count(std::size_t n_samples) const;
  void validate() const;
};

// In-place iterative radix-2 transform. Size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular HTK-mel filters as a dense [n_mels x (fft_size/2 + 1)] matrix.
std::vector<double> mel_filterbank(const FbankConfig& cfg);
// Center frequency in Hz of each filter.
std::vector<double> mel_centers_hz(const FbankConfig& cfg);

// Log mel energies, [n_mels x T]. Throws TooShort below one window.
Tensor compute_fbank(std::span<const double> waveform, const FbankConfig& cfg = {});

}  // namespace phonebench
