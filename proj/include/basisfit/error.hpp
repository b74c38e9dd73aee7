#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace basisfit {

enum class ErrorCode {
  NotPositiveDefinite,
  DimensionMismatch,
  NonPositiveDepth,
  EmptySparseSet,
  InvalidBasis,
  PixelOutOfRange,
  ScaleOutOfRange,
  KinkProximity,
  CapViolation,
  NoEligiblePixels,
  NoValidPixels,
  HandleConsumed,
  Format,
  Config,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::EmptySparseSet: return "EmptySparseSet";
    case ErrorCode::InvalidBasis: return "InvalidBasis";
    case ErrorCode::PixelOutOfRange: return "PixelOutOfRange";
    case ErrorCode::ScaleOutOfRange: return "ScaleOutOfRange";
    case ErrorCode::KinkProximity: return "KinkProximity";
    case ErrorCode::CapViolation: return "CapViolation";
    case ErrorCode::NoEligiblePixels: return "NoEligiblePixels";
    case ErrorCode::NoValidPixels: return "NoValidPixels";
    case ErrorCode::HandleConsumed: return "HandleConsumed";
    case ErrorCode::Format: return "Format";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

/// Numerical failures (NotPositiveDefinite, KinkProximity, ...) and input
/// validation failures share one exception type; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for failures of the fit itself rather than of its inputs.
  bool is_numerical() const noexcept {
    return code_ == ErrorCode::NotPositiveDefinite || code_ == ErrorCode::KinkProximity ||
           code_ == ErrorCode::EmptySparseSet;
  }

 private:
  ErrorCode code_;
};

class NotPositiveDefinite : public Error {
 public:
  explicit NotPositiveDefinite(long pivot_index)
      : Error(ErrorCode::NotPositiveDefinite,
              "non-positive pivot at index " + std::to_string(pivot_index)),
        pivot_index_(pivot_index) {}

  long pivot_index() const noexcept { return pivot_index_; }

 private:
  long pivot_index_;
};

}  // namespace basisfit
