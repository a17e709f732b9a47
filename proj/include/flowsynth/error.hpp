#pragma once

#include <stdexcept>
#include <string>

namespace flowsynth {

/// Category attached to every error raised by the library. The C API maps
/// these one-to-one onto its status codes.
enum class ErrorKind {
  InvalidArgument,
  ShapeMismatch,
  NonFinite,
  Io,
  Parse,
  Format,
  Solver,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace flowsynth
