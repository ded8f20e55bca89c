// Shared error taxonomy. Every failure mode in the library maps onto one of
// these categories so the CLI can translate exceptions into exit codes and
// tests can assert on the failure class rather than on message text.
#pragma once

#include <stdexcept>
#include <string>

namespace flock {

enum class ErrorCode {
  Domain,      // argument outside its mathematical domain (negative radius, c <= s, ...)
  Usage,       // structurally invalid call (dimension mismatch, empty knot list, ...)
  Underflow,   // a trajectory was evaluated outside its covered time window
  Invariant,   // a guaranteed runtime bound failed (velocity cap, delay residual, ...)
  Config,      // malformed or inconsistent configuration input
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Domain:    return "domain";
    case ErrorCode::Usage:     return "usage";
    case ErrorCode::Underflow: return "history-underflow";
    case ErrorCode::Invariant: return "invariant-violation";
    case ErrorCode::Config:    return "config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

// Common precondition helper: raises a Domain error unless `ok`.
inline void require(bool ok, ErrorCode code, const std::string& message) {
  if (!ok) raise(code, message);
}

}  // namespace flock
