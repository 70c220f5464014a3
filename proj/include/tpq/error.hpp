#pragma once

#include <stdexcept>
#include <string>

namespace tpq {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kMalformed,
  kStaleTable,
  kDegenerate,
  kNonFinite,
  kIo,
  kInternal,
};

const char* to_string(ErrorCode code) noexcept;

/// Exception type thrown by every module in the library. The C API maps
/// `code()` onto its status enum one-to-one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tpq
