#pragma once

#include <stdexcept>
#include <string>

namespace nmqj {

// Base for all failures that depend on run-time data (model content, step
// size, ensemble state). Programming errors (bad arguments with no data
// dependence) use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A jump probability left [0, 1] for the requested step size.
class StepTooLarge : public Error {
 public:
  using Error::Error;
};

// A negative channel needs population flow out of a state whose source
// state is absent from the ensemble, so the reverse process cannot be
// represented. See jump_engine.hpp.
class UnravelingBreakdown : public Error {
 public:
  using Error::Error;
};

// Renormalization hit a numerically zero vector.
class StateAnnihilated : public Error {
 public:
  using Error::Error;
};

// A rate function was evaluated outside its domain of definition.
class RateDomainError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent run configuration. Messages carry the
// offending field path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace nmqj
