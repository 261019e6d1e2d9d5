#include "sessim/error.hpp"

namespace sessim {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedRecord: return "TruncatedRecord";
    case ErrorKind::UnsupportedLinkType: return "UnsupportedLinkType";
    case ErrorKind::HeaderOverflow: return "HeaderOverflow";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::NotEnoughClasses: return "NotEnoughClasses";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::ProtocolViolation: return "ProtocolViolation";
    case ErrorKind::NumericFailure: return "NumericFailure";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace sessim
