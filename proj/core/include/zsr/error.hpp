#pragma once

#include <stdexcept>
#include <string>

namespace zsr {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kInvalidArgument,
  kIo,
  kDataCorruption,
  kProtocol,
  kNumeric,
};

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

}  // namespace zsr
