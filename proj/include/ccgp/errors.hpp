#pragma once

#include <stdexcept>
#include <string>

namespace ccgp {

// Invalid hyperparameter or argument outside the domain of an operation.
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data (files, records, mismatched shapes).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numerical failure (factorization breakdown, quadrature non-convergence).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw DomainError(msg);
}

}  // namespace ccgp
