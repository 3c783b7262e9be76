#include "traitgeo/error.hpp"

namespace traitgeo {

std::string_view error_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::MissingParameter: return "MissingParameter";
    case ErrorKind::InvalidParameter: return "InvalidParameter";
    case ErrorKind::TooFewTraits: return "TooFewTraits";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::MissingCell: return "MissingCell";
    case ErrorKind::ScaleViolation: return "ScaleViolation";
    case ErrorKind::NoFluencyData: return "NoFluencyData";
    case ErrorKind::BadCorrelation: return "BadCorrelation";
    case ErrorKind::JudgeUnavailable: return "JudgeUnavailable";
    case ErrorKind::UnparseableVerdict: return "UnparseableVerdict";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(error_name(kind)) + ": " + message), kind_(kind) {}

}  // namespace traitgeo
