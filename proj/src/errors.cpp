#include "fadesched/errors.hpp"

namespace fadesched {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation: return "ValidationError";
    case ErrorKind::EnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorKind::UnknownEstimate: return "UnknownEstimate";
    case ErrorKind::DegenerateStats: return "DegenerateStats";
    case ErrorKind::NotInRegion: return "NotInRegion";
    case ErrorKind::ZeroSecondMoment: return "ZeroSecondMoment";
    case ErrorKind::ZeroArrivals: return "ZeroArrivals";
    case ErrorKind::InvalidHorizon: return "InvalidHorizon";
    case ErrorKind::EmptyTrace: return "EmptyTrace";
    case ErrorKind::UnknownPreset: return "UnknownPreset";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

bool Error::is_validation() const noexcept {
  switch (kind_) {
    case ErrorKind::Validation:
    case ErrorKind::InvalidHorizon:
    case ErrorKind::UnknownPreset:
      return true;
    default:
      return false;
  }
}

void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

}  // namespace fadesched
