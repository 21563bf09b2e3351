// SPDX-License-Identifier: Apache-2.0
#include "core/error.hpp"

namespace phonebench {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Dimension: return "dimension";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    case ErrorCode::Label: return "label";
    case ErrorCode::TooShort: return "too_short";
    case ErrorCode::Contract: return "contract";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::Inconclusive: return "inconclusive";
    case ErrorCode::EmptyOutput: return "empty_output";
    case ErrorCode::InvalidStatistics: return "invalid_statistics";
  }
  return "unknown";
}

}  // namespace phonebench
