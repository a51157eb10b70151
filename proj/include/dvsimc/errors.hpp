#pragma once

#include <stdexcept>
#include <string>

namespace dvsimc {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  invalid_input,
  window,
  not_persistently_exciting,
  inconsistent,
  inverse_unavailable,
  closure_divergence,
  numeric,
  instability,
  io,
  config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::window: return "window";
    case ErrorKind::not_persistently_exciting: return "not-persistently-exciting";
    case ErrorKind::inconsistent: return "inconsistent";
    case ErrorKind::inverse_unavailable: return "inverse-unavailable";
    case ErrorKind::closure_divergence: return "closure-divergence";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::instability: return "instability";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace dvsimc
