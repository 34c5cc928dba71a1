#pragma once

#include <stdexcept>
#include <string>

namespace g2l {

// Invalid configuration or precondition violation; maps to CLI exit code 2.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed textual input (structure grammar, config files, rng state).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/sequence dimensions do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Dataset or checkpoint files missing, truncated, or inconsistent.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// All fitness values are exactly zero; Eq.-style proportional selection is
// undefined and the caller must fall back to uniform probabilities.
struct DegenerateFitnessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// All branch weights are exactly zero; normalization is undefined.
struct DegenerateWeightsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace g2l
