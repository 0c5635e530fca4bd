#pragma once

#include <stdexcept>
#include <string>

namespace ssnt {

// Base of every error raised by the library. The CLI maps any of these to a
// nonzero exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent dimensions, out-of-range hyperparameters, mismatched models.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or impossible data (empty sequences, unknown ids, -inf marginals).
class InputError : public Error {
 public:
  using Error::Error;
};

// API misuse: calling an operation in a state where it is not defined.
class UsageError : public Error {
 public:
  using Error::Error;
};

// A pair whose lattice exceeds the configured cell budget.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Corrupt, truncated or incompatible files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Broken internal invariant (stale caches and the like).
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ssnt
