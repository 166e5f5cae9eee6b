#pragma once

#include <stdexcept>
#include <string>

namespace blcf {

/// Broad failure category. The CLI maps these onto exit codes.
enum class ErrorKind {
  validation,  // bad arguments, shape mismatch, malformed content
  io,          // file missing, unreadable, unwritable
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string& what) {
  throw Error(ErrorKind::validation, what);
}

[[noreturn]] inline void fail_io(const std::string& what) {
  throw Error(ErrorKind::io, what);
}

}  // namespace blcf
