#pragma once

#include <stdexcept>
#include <string>

namespace unic {

// Coarse failure classes; the CLI maps them onto exit codes.
enum class ErrorKind { Usage, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_data_error(const std::string& what) {
  throw Error(ErrorKind::Data, what);
}

[[noreturn]] inline void throw_numeric_error(const std::string& what) {
  throw Error(ErrorKind::Numeric, what);
}

[[noreturn]] inline void throw_usage_error(const std::string& what) {
  throw Error(ErrorKind::Usage, what);
}

}  // namespace unic
