#pragma once

#include <stdexcept>
#include <string>

namespace blsh {

/// Failure classes. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  usage = 1,    // bad argument or configuration
  io = 2,       // unreadable/unwritable file, malformed format, empty result
  shape = 3,    // dimension mismatch
  numeric = 4,  // non-finite data, eigen-solver failure, resource caps
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace blsh
