#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gpk {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (profiles, hyperparameters, flags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition (dimension mismatch, empty input).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or produced non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace gpk
