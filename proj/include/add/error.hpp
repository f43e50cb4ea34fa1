#pragma once

#include <stdexcept>
#include <string>

namespace add {

enum class ErrorKind {
  Format,       // malformed file header or manifest
  Io,           // missing, unreadable or truncated file
  Unsupported,  // valid but unsupported variant of a format
  Domain,       // argument outside the mathematical domain
  Parameter,    // invalid configuration value for an operation
  Type,         // wrong kind of input (e.g. RGB where gray is required)
  Config,       // experiment / CLI configuration error
  Data,         // dataset-level inconsistency
  Solver,       // numerical solver failure
  Stale,        // artifacts built with mismatching settings
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Format: return "format";
    case ErrorKind::Io: return "io";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Type: return "type";
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Solver: return "solver";
    case ErrorKind::Stale: return "stale";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace add
