#pragma once

#include <stdexcept>
#include <string>

namespace bmfal {

// Caller violated a documented precondition (bad shapes, bad partition, ...).
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A numerical procedure failed beyond recovery (non-PSD matrix, divergence).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A candidate would exceed the remaining budget.
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The inner input optimizer could not produce a usable point.
struct OptimizerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A combinatorial search would exceed its enumeration guard.
struct SizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bmfal
