#pragma once

#include <stdexcept>
#include <string>

namespace mtur {

/// Base of every error thrown by the library. `kind()` is a stable short tag
/// used as the machine-readable prefix by the command-line front end.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

/// Tensor or image shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

/// A configuration value violates a documented constraint.
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

/// API misuse, e.g. calling backward on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "usage"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

/// NaN/Inf encountered where finite values are required.
class NumericalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical"; }
};

}  // namespace mtur
