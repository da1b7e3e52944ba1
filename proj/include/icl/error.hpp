#pragma once

#include <stdexcept>
#include <string>

namespace icl {

enum class ErrorKind {
  DegenerateInput,
  NoConvergence,
  DimensionMismatch,
  NonFiniteLoss,
  OutOfRange,
  PreconditionViolated,
  ParseError,
  ValidationError,
  IoError,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so callers
// (the CLI in particular) can map it to an exit status without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::PreconditionViolated: return "PreconditionViolated";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace icl
