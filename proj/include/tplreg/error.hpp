#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tplreg {

enum class ErrorCode {
  OutOfBounds,
  SingularTransform,
  InvalidArgument,
  InvalidRank,
  DimensionMismatch,
  ReferenceTooSmall,
  EmptyDictionary,
  NoValidPixels,
  DegenerateIntensity,
  Diverged,
  NotMatched,
  TooFewImages,
  DisconnectedGraph,
  LengthMismatch,
  Io,
  Format,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// batch callers can fold it into a status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tplreg
