// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gaitloop {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix shape does not match the configured layout.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or violated precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data; carries row/column when known.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure such as a diverging (NaN) loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace gaitloop
