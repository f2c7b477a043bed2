#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace flatfiber {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (mesh level out of range, bad sizes, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A user-supplied function produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// A linear solve or factorization failed.
class LinearAlgebraError : public Error {
 public:
  using Error::Error;
};

/// The eigen-iteration did not reach its residual target.
class EigenConvergenceError : public Error {
 public:
  EigenConvergenceError(const std::string& what, std::vector<double> history)
      : Error(what), residual_history(std::move(history)) {}
  std::vector<double> residual_history;
};

/// An eigenvalue sits on (or within the safety margin of) an interval endpoint.
class ResonanceError : public Error {
 public:
  using Error::Error;
};

/// Degenerate eigenvalue clusters and similar unsupported configurations.
class NotSupportedError : public Error {
 public:
  using Error::Error;
};

/// Not enough eigenvalues were computed to bracket the interval's upper endpoint.
class NeedsMoreEigenvaluesError : public Error {
 public:
  using Error::Error;
};

/// The operator L_c (or the full Jacobian) is numerically singular.
class SingularOperatorError : public LinearAlgebraError {
 public:
  SingularOperatorError(const std::string& what, double condition)
      : LinearAlgebraError(what), condition_estimate(condition) {}
  double condition_estimate;
};

/// A nonlinear iteration failed (max iterations, divergence, exhausted continuation).
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incomplete run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures while writing artifacts.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flatfiber
