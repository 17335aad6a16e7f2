#pragma once

#include <stdexcept>
#include <string>

namespace loopsched {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numeric parameter is outside its admissible range (NaN theta, K_f < K_l, ...).
struct InvalidParameterError : Error {
  using Error::Error;
};

// Input is formally valid but the operation is undefined for it (CSS with sigma = 0).
struct DegenerateInputError : Error {
  using Error::Error;
};

// Malformed policy grammar, env var, or CLI configuration.
struct ConfigError : Error {
  using Error::Error;
};

// A persisted file violates its schema.
struct ValidationError : Error {
  using Error::Error;
};

struct UnsupportedVersionError : ValidationError {
  using ValidationError::ValidationError;
};

struct IoError : Error {
  using Error::Error;
};

// Factorization failures, non-finite objective values and the like.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace loopsched
