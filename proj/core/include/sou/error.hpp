#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sou {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input. Line and column are 1-based; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : Error(line == 0 ? what
                        : what + " (line " + std::to_string(line) + ", column " +
                              std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// File system failures and malformed binary files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or inconsistent inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor or matrix dimensions that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A pipeline step tried to use a resource the scenario does not grant.
class LedgerViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace sou
