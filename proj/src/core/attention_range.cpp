// SPDX-License-Identifier: Apache-2.0
#include "core/attention_range.hpp"

#include <charconv>

#include "core/error.hpp"

namespace phonebench {

AttentionRange AttentionRange::parse(std::string_view text) {
  if (text == "unlimited" || text == "inf" || text == "none") return unlimited();
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    fail(ErrorCode::Config, "invalid attention range '" + std::string(text) + "'");
  }
  return frames(value);
}

std::string AttentionRange::to_string() const {
  return radius_ ? std::to_string(*radius_) : std::string("unlimited");
}

std::size_t BandMask::admissible_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < length_; ++i) n += last_key(i) - first_key(i);
  return n;
}

}  // namespace phonebench
