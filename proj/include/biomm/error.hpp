#pragma once

#include <stdexcept>
#include <string>

namespace biomm {

// Base of every error thrown by the toolkit. The CLI maps `is_validation()`
// errors to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual bool is_validation() const noexcept { return false; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  bool is_validation() const noexcept override { return true; }
};

// Shape disagreement between tensors; the message names the offending axis.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// API misuse: backward on a non-scalar, stale pool indices, missing grads.
class UsageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Input data that cannot be turned into domain objects.
class IngestError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public IngestError {
 public:
  ParseError(const std::string& where, std::size_t line, const std::string& what)
      : IngestError(where + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Internal state that should be impossible, e.g. pool indices out of range.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

}  // namespace biomm
