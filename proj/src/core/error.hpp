#pragma once

#include <stdexcept>
#include <string>

namespace fpp {

/// Failure classes. The numeric values double as CLI exit codes for
/// Runtime (1) and InvalidInput (2); Io is reported as a runtime failure.
enum class ErrorKind { Runtime = 1, InvalidInput = 2, Io = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }
[[noreturn]] inline void invalid(const std::string& what) { throw Error(ErrorKind::InvalidInput, what); }

}  // namespace fpp
