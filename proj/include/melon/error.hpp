#pragma once

#include <stdexcept>
#include <string>

namespace melon {

// Base error for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration (unknown keys, invalid values). CLI exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

// Bad or missing input data (malformed rows, unknown ids). CLI exit code 3.
struct DataError : Error {
  using Error::Error;
};

// Numeric failure (shape mismatch, non-finite values, SVD on bad input).
// CLI exit code 4.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace melon
