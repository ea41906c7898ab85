#pragma once

#include <stdexcept>
#include <string>

namespace uscore {

// Exception categories map one-to-one onto the CLI exit codes:
// ConfigError -> 1, DataError -> 2, NumericalError -> 3.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension mismatch between an argument and what the callee expects.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// NaN/Inf produced or consumed, divergence, or a failed factorization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace uscore
