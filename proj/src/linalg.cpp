#include "coidyn/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace coidyn {

CheckedLu::CheckedLu(const CMat& a, const std::string& context) : lu_(a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw SingularMatrixError(context + ": matrix must be square and non-empty");
  }
  double scale = a.diagonal().cwiseAbs().maxCoeff();
  if (scale == 0.0) {
    scale = a.cwiseAbs().maxCoeff();
  }
  if (scale == 0.0) {
    throw SingularMatrixError(context + ": zero matrix");
  }
  // Diagonal of the packed LU factor is the diagonal of U.
  const double pivot_min = lu_.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(pivot_min > kPivotRelTol * scale)) {
    throw SingularMatrixError(context + ": pivot " + std::to_string(pivot_min) +
                              " below threshold " +
                              std::to_string(kPivotRelTol * scale));
  }
}

CMat solve_checked(const CMat& a, const CMat& b, const std::string& context) {
  return CheckedLu(a, context).solve(b);
}

CVec solve_checked(const CMat& a, const CVec& b, const std::string& context) {
  return CheckedLu(a, context).solve(b);
}

}  // namespace coidyn
