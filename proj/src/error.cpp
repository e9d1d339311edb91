#include "nesy/error.hpp"

namespace nesy {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::NotBoolean: return "NotBoolean";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SpaceMismatch: return "SpaceMismatch";
    case ErrorKind::DomainViolation: return "DomainViolation";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::InconsistentFixed: return "InconsistentFixed";
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::IdxUnavailable: return "IdxUnavailable";
    case ErrorKind::NoPath: return "NoPath";
    case ErrorKind::NonBooleanAtTermination: return "NonBooleanAtTermination";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace nesy
