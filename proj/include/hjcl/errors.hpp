#pragma once

#include <stdexcept>
#include <string>

namespace hjcl {

// Malformed or inconsistent input data (parse failures, unknown labels,
// integrity mismatches). CLI maps this to exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration values; messages list every violation at once.
// CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required. CLI exit code 4.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape contract violation. Reported with op name and both shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace hjcl
