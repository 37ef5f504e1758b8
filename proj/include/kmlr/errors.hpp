#pragma once

#include <stdexcept>
#include <string>

namespace kmlr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (dimensions, non-finite cells, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid option or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Factorization failure, likelihood blow-up, or a violated internal invariant.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace kmlr
