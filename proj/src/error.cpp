#include "m3dvg/error.hpp"

namespace m3dvg {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonRepresentable: return "NonRepresentable";
    case ErrorKind::NonRenderable: return "NonRenderable";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::DataError: return "DataError";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::MaskMismatch: return "MaskMismatch";
    case ErrorKind::ZeroNormRow: return "ZeroNormRow";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::InvalidProbability: return "InvalidProbability";
    case ErrorKind::DegenerateBox: return "DegenerateBox";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace m3dvg
