// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include <json.hpp>

#include "core/attention_range.hpp"

namespace phonebench {

enum class Arch { ContextNet, Lstm, Transformer, Conformer };

std::string_view arch_name(Arch a);
Arch parse_arch(std::string_view name);
bool is_attention(Arch a);

inline constexpr std::size_t kNumClasses = 37;
inline constexpr std::size_t kNumMels = 80;

struct ArchConfig {
  Arch arch = Arch::Transformer;
  std::size_t depth = 4;   // layers, or blocks for ContextNet
  std::size_t width = 64;  // d
  std::size_t kernel = 5;  // ContextNet and Conformer
  AttentionRange range = AttentionRange::unlimited();
  std::size_t heads = 4;
  bool use_ds = true;
  bool use_se = true;
  std::size_t se_reduction = 8;
  std::size_t subsample_channels = 256;
  std::size_t n_mels = kNumMels;
  std::size_t n_classes = kNumClasses;

  // Throws a config error naming the first violated constraint.
  void validate() const;

  nlohmann::json to_json() const;
  // Missing keys take defaults; unknown keys are rejected.
  static ArchConfig from_json(const nlohmann::json& j);
  // Sorted-key compact JSON; stable across runs.
  std::string canonical() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

// FNV-1a 64-bit over a byte string, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace phonebench
