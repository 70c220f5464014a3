#include "tpq/error.hpp"

namespace tpq {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kMalformed: return "malformed data";
    case ErrorCode::kStaleTable: return "stale codec table";
    case ErrorCode::kDegenerate: return "degenerate calibration";
    case ErrorCode::kNonFinite: return "non-finite value";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kInternal: return "internal error";
  }
  return "unknown error";
}

}  // namespace tpq
