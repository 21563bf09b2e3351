// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace phonebench {

// One-sided self-attention range: query i may attend key j iff |i - j| <= r.
class AttentionRange {
 public:
  static constexpr AttentionRange unlimited() { return AttentionRange(); }
  static constexpr AttentionRange frames(std::size_t r) { return AttentionRange(r); }

  // Accepts "unlimited", "inf", or a non-negative integer.
  static AttentionRange parse(std::string_view text);

  constexpr bool bounded() const { return radius_.has_value(); }
  constexpr std::size_t radius() const { return *radius_; }

  constexpr bool admits(std::size_t i, std::size_t j) const {
    if (!radius_) return true;
    const std::size_t d = i > j ? i - j : j - i;
    return d <= *radius_;
  }

  std::string to_string() const;

  friend constexpr bool operator==(const AttentionRange&, const AttentionRange&) = default;

 private:
  constexpr AttentionRange() = default;
  constexpr explicit AttentionRange(std::size_t r) : radius_(r) {}

  std::optional<std::size_t> radius_;
};

// Boolean admissibility pattern over a T x T attention map.
class BandMask {
 public:
  BandMask(std::size_t length, AttentionRange range) : length_(length), range_(range) {}

  std::size_t length() const { return length_; }
  AttentionRange range() const { return range_; }
  bool admissible(std::size_t i, std::size_t j) const { return range_.admits(i, j); }

  // Half-open key interval [first, last) admitted for query i.
  std::size_t first_key(std::size_t i) const {
    if (!range_.bounded()) return 0;
    return i > range_.radius() ? i - range_.radius() : 0;
  }
  std::size_t last_key(std::size_t i) const {
    if (!range_.bounded()) return length_;
    const std::size_t end = i + range_.radius() + 1;
    return end < length_ ? end : length_;
  }

  std::size_t admissible_count() const;

 private:
  std::size_t length_;
  AttentionRange range_;
};

}  // namespace phonebench
