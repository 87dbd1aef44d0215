// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cpcnn {

enum class ErrorCode {
  kShapeMismatch,
  kInvalidArgument,
  kContractViolation,
  kMagicMismatch,
  kVersionMismatch,
  kTruncated,
  kIo,
};

const char* error_code_name(ErrorCode code);

// Every failure in the library surfaces as a cpcnn::Error carrying a
// machine-checkable code next to the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace cpcnn
