#pragma once

#include <stdexcept>
#include <string>

namespace tgeat {

enum class ErrorKind {
  config,
  validation,
  io,
  dependency,
  numeric,
  unsupported,
  unseen_environment,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit code for an error kind: 2 config, 3 dependency, 4 numeric.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dependency:
      return 3;
    case ErrorKind::numeric:
      return 4;
    default:
      return 2;
  }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace tgeat
