#pragma once

#include <stdexcept>
#include <string>

namespace breathdet {

/// Base class for all library errors. `exit_code()` maps onto the CLI contract.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration or parameters (bad band, pulse too wide, ...).
class ConfigError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Dimension mismatch, out-of-range index or otherwise invalid argument.
class ValidationError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

/// Malformed or truncated input data.
class DataError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Parse failure with the byte offset at which it was detected.
class ParseError : public DataError {
public:
  ParseError(const std::string& what, std::size_t offset)
      : DataError(what + " (at byte " + std::to_string(offset) + ")"), message_(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }
  const std::string& message() const noexcept { return message_; }

private:
  std::string message_;
  std::size_t offset_;
};

/// Degenerate input (e.g. zero-energy signal) or a failed numerical step.
class NumericalError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace breathdet
