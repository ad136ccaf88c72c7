#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>

#include "coidyn/errors.hpp"

namespace coidyn {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double kPivotRelTol = 1e-12;

// LU factorization that refuses to proceed across a numerically singular
// matrix. Pivots are compared against kPivotRelTol times the largest
// diagonal magnitude of the input (admittance matrices are diagonally
// dominated, so the diagonal is the natural scale).
class CheckedLu {
 public:
  CheckedLu(const CMat& a, const std::string& context);

  CVec solve(const CVec& b) const { return lu_.solve(b); }
  CMat solve(const CMat& b) const { return lu_.solve(b); }

 private:
  Eigen::PartialPivLU<CMat> lu_;
};

CMat solve_checked(const CMat& a, const CMat& b, const std::string& context);
CVec solve_checked(const CMat& a, const CVec& b, const std::string& context);

}  // namespace coidyn
