#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace traitgeo {

enum class ErrorKind {
  ParseError,
  DimensionMismatch,
  NonFinite,
  IoError,
  ZeroVector,
  RankDeficient,
  NotSymmetric,
  MissingParameter,
  InvalidParameter,
  TooFewTraits,
  ShapeMismatch,
  MissingCell,
  ScaleViolation,
  NoFluencyData,
  BadCorrelation,
  JudgeUnavailable,
  UnparseableVerdict,
};

std::string_view error_name(ErrorKind kind);

/// Every failure raised by the library carries one of the ErrorKind tags; the
/// CLI maps the tag onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept { return error_name(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace traitgeo
