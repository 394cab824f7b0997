#include "tplreg/error.hpp"

namespace tplreg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::SingularTransform: return "SingularTransform";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidRank: return "InvalidRank";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ReferenceTooSmall: return "ReferenceTooSmall";
    case ErrorCode::EmptyDictionary: return "EmptyDictionary";
    case ErrorCode::NoValidPixels: return "NoValidPixels";
    case ErrorCode::DegenerateIntensity: return "DegenerateIntensity";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::NotMatched: return "NotMatched";
    case ErrorCode::TooFewImages: return "TooFewImages";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Format: return "Format";
  }
  return "Unknown";
}

}  // namespace tplreg
