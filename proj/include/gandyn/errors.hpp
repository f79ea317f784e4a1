#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gandyn {

// Bad input: wrong shapes, out-of-range parameters, malformed files.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation that was set up correctly but could not finish numerically.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The QR iteration hit its cap. `converged` eigenvalues were found before giving up.
class EigenConvergenceError : public NumericalError {
 public:
  EigenConvergenceError(const std::string& what, std::size_t converged, std::size_t dimension)
      : NumericalError(what), converged_(converged), dimension_(dimension) {}

  std::size_t converged() const { return converged_; }
  std::size_t dimension() const { return dimension_; }

 private:
  std::size_t converged_;
  std::size_t dimension_;
};

// An update produced a non-finite parameter. The update is rejected.
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace gandyn
