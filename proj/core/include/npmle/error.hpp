#pragma once

#include <stdexcept>
#include <string>

namespace npmle {

// Bad input: malformed observation, parameter outside the box, cap exceeded,
// unsupported option. Maps to CLI exit code 1.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation ran but could not meet its accuracy contract (quadrature
// refinement disagreement, singular Gram matrix, non-convergence).
// Maps to CLI exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularGramError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace npmle
