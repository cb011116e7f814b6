#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace reprscope {

enum class ErrorKind {
  MissingFile,
  MalformedManifest,
  ShapeMismatch,
  NonFiniteValue,
  IoFailure,
  InvariantViolation,
  ZeroVariance,
  AlreadyStandardized,
  NotStandardized,
  DimensionMismatch,
  IndexOutOfRange,
  MultimodalUnsupported,
  InsufficientData,
  NonFiniteAscent,
  SameIndex,
  DegenerateRav,
  SizeMismatch,
  Disconnected,
  MissingRoot,
  DuplicateEdge,
  ParseError,
  UnknownConcept,
  DegenerateTaxonomy,
  RootPair,
  UnknownToken,
  TooSmall,
  ConstantTriangle,
  SingleClass,
  TooFewPoints,
  NotADistanceMatrix,
  BadContamination,
  NoConvergence,
  LengthMismatch,
  ConfigError,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so callers (and tests)
// can dispatch on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace reprscope
