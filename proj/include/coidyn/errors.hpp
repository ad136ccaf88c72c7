#pragma once

#include <stdexcept>
#include <string>

namespace coidyn {

// Base class for all engine failures so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A linear solve hit a pivot below threshold. Never silently regularized.
struct SingularMatrixError : Error {
  using Error::Error;
};

// An iterative routine exhausted its budget before reaching tolerance.
struct ConvergenceError : Error {
  using Error::Error;
};

// Case data violates schema or semantic constraints. Carries the field path.
struct ValidationError : Error {
  explicit ValidationError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_path(field) {}
  std::string field_path;
};

// The requested operating point cannot support the model (for example a
// zero reactive power dispatch makes the PLL power loop non-invertible).
struct OperatingPointError : Error {
  using Error::Error;
};

}  // namespace coidyn
