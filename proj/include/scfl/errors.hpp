#pragma once

#include <stdexcept>

namespace scfl {

// Matrix operands with incompatible dimensions.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration. Raised at setup, never mid-run.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A public numeric operation produced a NaN or infinity.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file (config, feature file, coded export).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace scfl
