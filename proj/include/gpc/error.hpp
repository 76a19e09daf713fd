#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gpc {

enum class ErrorKind {
  DimensionMismatch,
  NonSquare,
  NonSymmetric,
  NotPositiveDefinite,
  Singular,
  NonFinite,
  NotPowerOfTwo,
  OperatorNotSpd,
  NotConverged,
  Unsupported,
  InvalidArgument,
  Parse,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so
/// callers (CLI, bindings) can map it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const char* what) {
  if (!cond) fail(kind, what);
}

}  // namespace gpc
