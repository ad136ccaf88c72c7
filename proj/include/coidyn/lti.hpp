#pragma once

#include <vector>

#include "coidyn/linalg.hpp"

namespace coidyn {

// Real-coefficient polynomial in s, ascending powers: c[k] is the s^k term.
// Trailing near-zero coefficients are trimmed relative to the largest one.
struct Polynomial {
  std::vector<double> c;

  Polynomial() = default;
  explicit Polynomial(std::vector<double> coeffs) : c(std::move(coeffs)) { trim(); }

  int degree() const { return static_cast<int>(c.size()) - 1; }
  bool is_zero() const { return c.empty(); }
  double leading() const;
  double at(int k) const { return (k >= 0 && k < static_cast<int>(c.size())) ? c[k] : 0.0; }

  Complex eval(Complex s) const;
  void trim(double rel_tol = 1e-14);

  Polynomial operator+(const Polynomial& o) const;
  Polynomial operator-(const Polynomial& o) const;
  Polynomial operator*(const Polynomial& o) const;
  Polynomial scaled(double k) const;
  Polynomial shifted_up(int powers) const;  // multiply by s^powers
};

// Quotient and remainder of polynomial long division: num = q * den + r.
struct PolyDivision {
  Polynomial quotient;
  Polynomial remainder;
};
PolyDivision divmod(const Polynomial& num, const Polynomial& den);

struct RationalFunction;

// Cancel common s factors (zero constant terms shared by num and den).
RationalFunction cancel_common_s(RationalFunction f);

// Ratio of real polynomials. Not automatically reduced.
struct RationalFunction {
  Polynomial num;
  Polynomial den;

  Complex eval(Complex s) const;
  int relative_degree() const { return den.degree() - num.degree(); }
  bool is_strictly_proper() const { return relative_degree() >= 1; }

  // Scale num and den so den is monic.
  RationalFunction monic() const;
  RationalFunction scaled(double k) const;
  // (num * s^powers) / den
  RationalFunction times_s(int powers = 1) const;
  RationalFunction operator+(const RationalFunction& o) const;
  RationalFunction operator-(const RationalFunction& o) const;
};

// Single-input state-space realization x' = A x + B u, y = C x + D u.
struct StateSpace {
  RMat a;
  RVec b;
  RMat c;   // one row per output
  RVec d;   // one entry per output

  int order() const { return static_cast<int>(a.rows()); }
  int outputs() const { return static_cast<int>(c.rows()); }
  // Transfer value C (sI - A)^-1 B + D for one output row.
  Complex transfer(Complex s, int output) const;
};

// Controllable canonical realization of a proper rational function
// (relative degree >= 0). Output 0 is the function itself.
StateSpace realize_controllable(const RationalFunction& g);

// Swing-form reading of a biproper or strictly proper closed branch
// F(s) = L - 1 / (2 H s - J(s)):
//   L   constant feedthrough (high-frequency gain of F),
//   H   equivalent inertia from the linear growth of -1/(F - L),
//   J   equivalent governor, J(0) == 0 by construction.
struct SwingEquivalent {
  double feedthrough_l = 0.0;
  double inertia_h = 0.0;
  RationalFunction governor;
};

// Decompose F into swing form. Requires -1/(F - L) to have relative
// degree exactly -1 (a polynomial part linear in s); throws Error otherwise.
SwingEquivalent extract_swing_equivalent(const RationalFunction& f);

}  // namespace coidyn
