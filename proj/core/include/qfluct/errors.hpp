#pragma once

#include <stdexcept>
#include <string>

namespace qfluct {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model parameters, options or configuration values.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Phase-space coordinates outside the model domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Photon cutoff too small for the eigenvectors that are actually used.
class TruncationError : public Error {
 public:
  using Error::Error;
};

/// LAPACK failure or residual check violation.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Any other numerical failure: empty shells, unreachable targets, singular inputs.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace qfluct
