#pragma once

#include <stdexcept>
#include <string>

namespace fadesched {

enum class ErrorKind {
  Validation,
  EnumerationTooLarge,
  UnknownEstimate,
  DegenerateStats,
  NotInRegion,
  ZeroSecondMoment,
  ZeroArrivals,
  InvalidHorizon,
  EmptyTrace,
  UnknownPreset,
  Io,
};

const char* to_string(ErrorKind kind);

// Base of every error raised by the library. The kind decides the CLI exit
// code: validation-type failures map to 2, everything else to 3.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  bool is_validation() const noexcept;

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace fadesched
