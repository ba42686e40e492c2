// Error type shared by all seqdistill modules. The kind maps onto the CLI
// exit-code contract (validation=2, divergence=3, format=65, missing_file=66).
#pragma once

#include <stdexcept>
#include <string>

namespace seqdistill {

enum class ErrorKind {
  validation,
  format,
  missing_file,
  divergence,
  config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) {
  throw Error(ErrorKind::validation, msg);
}

[[noreturn]] inline void fail_format(const std::string& msg) {
  throw Error(ErrorKind::format, msg);
}

[[noreturn]] inline void fail_missing(const std::string& msg) {
  throw Error(ErrorKind::missing_file, msg);
}

}  // namespace seqdistill
