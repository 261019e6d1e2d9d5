#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sessim {

enum class ErrorKind {
  BadMagic,
  TruncatedRecord,
  UnsupportedLinkType,
  HeaderOverflow,
  VersionMismatch,
  CountMismatch,
  ShapeMismatch,
  NonScalarLoss,
  NotEnoughClasses,
  InsufficientSamples,
  ProtocolViolation,
  NumericFailure,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sessim
