#pragma once

#include <stdexcept>
#include <string>

namespace recon {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Array shapes disagree (coil counts, image sizes, connection counts).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration value violates its schema or an operation's preconditions.
// `key` names the first failing field when the error comes from config parsing.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg, std::string key = {})
      : Error(msg), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

// An operation was invoked on an object in a state that violates its contract.
class InvalidStateError : public Error {
 public:
  using Error::Error;
};

// A requested resource (split, sample id, dataset path) does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or numerically unstable intermediate results.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace recon
