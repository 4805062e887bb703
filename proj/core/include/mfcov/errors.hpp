#pragma once

#include <stdexcept>
#include <string>

namespace mfcov {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operands have incompatible shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be positive definite is not.
class DefinitenessError : public Error {
 public:
  DefinitenessError(const std::string& what, double eigenvalue)
      : Error(what), eigenvalue_(eigenvalue) {}

  /// The offending (smallest) eigenvalue.
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

/// The symmetric eigensolver did not converge.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations)
      : Error(what), iterations_(iterations) {}

  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

/// A matrix function would overflow double precision.
class RangeError : public Error {
 public:
  RangeError(const std::string& what, double eigenvalue)
      : Error(what), eigenvalue_(eigenvalue) {}

  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

/// A coupled sample hierarchy violates its size or shape invariants.
class HierarchyError : public Error {
 public:
  using Error::Error;
};

/// Moment summaries or cost models that admit no valid allocation.
class AllocationError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mfcov
