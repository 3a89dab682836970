#pragma once

#include <stdexcept>
#include <string>

namespace mac {

// Base class for all hard failures raised by the library. Expected negative
// outcomes (infeasibility, non-convergence of budgeted iterations) are
// reported through status enums on result types instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Eigendecomposition or other dense kernel failed to converge.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

// Schur complement requested with a (numerically) singular eliminated block.
class SingularBlock : public Error {
 public:
  using Error::Error;
};

// Dimension bookkeeping between a matrix and its block partition is broken.
class BadPartition : public Error {
 public:
  using Error::Error;
};

// sup over d is +infinity: the dd block of the quadratic form is not
// negative definite with margin.
class UnboundedSup : public Error {
 public:
  using Error::Error;
};

// Requested operation is outside the supported problem class.
class Unsupported : public Error {
 public:
  using Error::Error;
};

// A gain matrix is missing for one of the model labels.
class IncompleteGains : public Error {
 public:
  using Error::Error;
};

// A reduction produced a Hessian that fails validation. For positive
// definite Q, R this indicates an internal inconsistency, not bad input.
class ReductionInvalid : public Error {
 public:
  using Error::Error;
};

}  // namespace mac
