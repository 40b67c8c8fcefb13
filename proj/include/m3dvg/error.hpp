#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace m3dvg {

enum class ErrorKind {
  NonRepresentable,
  NonRenderable,
  FormatError,
  DataError,
  ShapeMismatch,
  MaskMismatch,
  ZeroNormRow,
  NonFinite,
  InvalidProbability,
  DegenerateBox,
  EmptySet,
  InvalidArgument,
};

std::string_view to_string(ErrorKind kind);

/// Every recoverable failure in the library is reported through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace m3dvg
