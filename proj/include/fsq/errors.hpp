#pragma once

#include <stdexcept>
#include <string>

namespace fsq {

// Invalid or inconsistent user configuration (scenario files, tables,
// manifold data). Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Physically inconsistent model construction (forbidden transitions, bad
// decay tables).
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure inside the integrators or solvers. Maps to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntegrationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace fsq
