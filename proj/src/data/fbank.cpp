// SPDX-License-Identifier: Apache-2.0
#include "data/fbank.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "core/error.hpp"

namespace phonebench {

std::size_t FbankConfig::window_samples() const {
  return static_cast<std::size_t>(std::lround(sample_rate * window_ms / 1000.0));
}

std::size_t FbankConfig::stride_samples() const {
  return static_cast<std::size_t>(std::lround(sample_rate * stride_ms / 1000.0));
}

std::size_t FbankConfig::frame_count(std::size_t n_samples) const {
  const std::size_t w = window_samples();
  if (n_samples < w) return 0;
  return 1 + (n_samples - w) / stride_samples();
}

void FbankConfig::validate() const {
  if (sample_rate <= 0 || window_ms <= 0 || stride_ms <= 0) fail(ErrorCode::Config, "fbank timing must be positive");
  if (n_mels == 0) fail(ErrorCode::Config, "fbank needs at least one mel filter");
  if (fft_size == 0 || (fft_size & (fft_size - 1)) != 0) {
    fail(ErrorCode::Config, "fft_size must be a power of two, got " + std::to_string(fft_size));
  }
  if (fft_size < window_samples()) fail(ErrorCode::Config, "fft_size is shorter than the analysis window");
  if (stride_samples() == 0) fail(ErrorCode::Config, "stride rounds to zero samples");
  if (!(low_hz >= 0 && low_hz < high_hz && high_hz <= sample_rate / 2)) {
    fail(ErrorCode::Config, "mel band edges must satisfy 0 <= low < high <= nyquist");
  }
  if (!(log_floor > 0)) fail(ErrorCode::Config, "log floor must be positive");
}

void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) fail(ErrorCode::InvalidArgument, "fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges(const FbankConfig& cfg) {
  const double lo = hz_to_mel(cfg.low_hz), hi = hz_to_mel(cfg.high_hz);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1);
  }
  return edges;
}

}  // namespace

std::vector<double> mel_centers_hz(const FbankConfig& cfg) {
  const auto edges = mel_edges(cfg);
  std::vector<double> out(cfg.n_mels);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) out[m] = mel_to_hz(edges[m + 1]);
  return out;
}

std::vector<double> mel_filterbank(const FbankConfig& cfg) {
  cfg.validate();
  const std::size_t bins = cfg.fft_size / 2 + 1;
  const auto edges = mel_edges(cfg);
  std::vector<double> fb(cfg.n_mels * bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    const double mel = hz_to_mel(cfg.sample_rate * static_cast<double>(b) / static_cast<double>(cfg.fft_size));
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
      double w = 0.0;
      if (mel > l && mel <= c) {
        w = (mel - l) / (c - l);
      } else if (mel > c && mel < r) {
        w = (r - mel) / (r - c);
      }
      fb[m * bins + b] = w;
    }
  }
  return fb;
}

Tensor compute_fbank(std::span<const double> waveform, const FbankConfig& cfg) {
  cfg.validate();
  const std::size_t win = cfg.window_samples(), hop = cfg.stride_samples();
  const std::size_t frames = cfg.frame_count(waveform.size());
  if (frames == 0) {
    fail(ErrorCode::TooShort, "waveform of " + std::to_string(waveform.size()) + " samples is shorter than one " +
                                  std::to_string(win) + "-sample window");
  }
  const std::size_t bins = cfg.fft_size / 2 + 1;
  const auto fb = mel_filterbank(cfg);

  std::vector<double> window(win);
  for (std::size_t n = 0; n < win; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(win));
  }

  std::vector<double> out(cfg.n_mels * frames);
  std::vector<std::complex<double>> buf(cfg.fft_size);
  std::vector<double> mag(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (std::size_t n = 0; n < win; ++n) buf[n] = waveform[t * hop + n] * window[n];
    fft_inplace(buf);
    for (std::size_t b = 0; b < bins; ++b) mag[b] = std::abs(buf[b]);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      const double* row = fb.data() + m * bins;
      for (std::size_t b = 0; b < bins; ++b) e += row[b] * mag[b];
      out[m * frames + t] = std::log(std::max(e, cfg.log_floor));
    }
  }
  return Tensor::from({cfg.n_mels, frames}, std::move(out));
}

}  // namespace phonebench
