// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

namespace phonebench {

// xoshiro256** seeded through splitmix64. Every random draw in the project
// goes through this generator so runs are reproducible bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be nonzero.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (cached second variate).
  double normal();

  // Number of 64-bit words drawn so far.
  std::uint64_t calls() const { return calls_; }

 private:
  std::array<std::uint64_t, 4> s_{};
  std::uint64_t calls_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace phonebench
