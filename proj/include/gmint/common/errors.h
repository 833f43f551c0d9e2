#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gmint {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or feature widths that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// backward() called on a tape that was already consumed.
class StaleGraphError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in a loss, gradient or parameter.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. line() is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Semantically invalid data: contradictory membership, too few samples, ...
class DataError : public Error {
 public:
  using Error::Error;
};

// Missing or stale upstream artifact.
class DependencyError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gmint
