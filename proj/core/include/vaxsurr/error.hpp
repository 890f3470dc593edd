#pragma once

#include <stdexcept>
#include <string>

namespace vaxsurr {

// Malformed or inconsistent caller input (dimensions, ranges, schema).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid scenario/study/design configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite or out-of-domain values produced during evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Nuisance or calibration estimation could not proceed (empty cells etc.).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vaxsurr
