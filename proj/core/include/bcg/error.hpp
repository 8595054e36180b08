#pragma once

#include <stdexcept>
#include <string>

namespace bcg {

enum class ErrorKind {
  kUsage,    // bad arguments or configuration
  kData,     // malformed or inconsistent input data
  kIo,       // filesystem failure
  kNumeric,  // solver or training failure
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

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace bcg
