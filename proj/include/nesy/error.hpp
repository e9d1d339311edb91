#pragma once

#include <stdexcept>
#include <string>

namespace nesy {

enum class ErrorKind {
  NotSymmetric,
  NotPositiveDefinite,
  NotBoolean,
  DimensionMismatch,
  SpaceMismatch,
  DomainViolation,
  TooLarge,
  ShapeMismatch,
  NumericalFailure,
  SingularSystem,
  BadMagic,
  TruncatedFile,
  InconsistentFixed,
  SyntaxError,
  IdxUnavailable,
  NoPath,
  NonBooleanAtTermination,
  VersionMismatch,
  CorruptFile,
  InvalidArgument,
};

const char* to_string(ErrorKind kind) noexcept;

// Every failure surfaced by the library carries one of the kinds above so
// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace nesy
