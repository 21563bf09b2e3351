// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace phonebench {

struct WavData {
  std::uint32_t sample_rate = 16000;
  std::vector<double> samples;  // scaled to [-1, 1)
};

// 16-bit PCM mono only.
WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, std::span<const double> samples, std::uint32_t sample_rate = 16000);

}  // namespace phonebench
