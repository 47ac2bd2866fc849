#pragma once

#include <stdexcept>
#include <string>

namespace spectral_hmm {

/// Broad failure classes. The CLI maps each to a distinct exit status.
enum class ErrorKind {
  usage,        // bad arguments
  format,       // malformed input files, dimension mismatches
  domain,       // argument outside an operation's domain
  numeric,      // rank deficiency, singular matrices, zero-probability histories
  instability,  // eigen-decomposition could not be trusted
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorKind::format, what) {}
};

/// Inconsistent matrix shapes or alphabet sizes.
struct StructuralError : Error {
  explicit StructuralError(const std::string& what) : Error(ErrorKind::format, what) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorKind::domain, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

struct InstabilityError : Error {
  explicit InstabilityError(const std::string& what) : Error(ErrorKind::instability, what) {}
};

/// Process exit status for a failure class: usage 2, format 3, numeric 4, instability 5.
inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::format: return 3;
    case ErrorKind::domain:
    case ErrorKind::numeric: return 4;
    case ErrorKind::instability: return 5;
  }
  return 1;
}

}  // namespace spectral_hmm
