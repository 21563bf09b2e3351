// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace phonebench {

enum class ErrorCode {
  InvalidArgument,
  Dimension,
  Config,
  Io,
  Format,
  Label,
  TooShort,
  Contract,
  Numeric,
  Infeasible,
  Inconclusive,
  EmptyOutput,
  InvalidStatistics,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace phonebench
