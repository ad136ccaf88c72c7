#include "coidyn/lti.hpp"

#include <algorithm>
#include <cmath>

namespace coidyn {

double Polynomial::leading() const {
  if (c.empty()) return 0.0;
  return c.back();
}

Complex Polynomial::eval(Complex s) const {
  Complex acc(0.0, 0.0);
  for (auto it = c.rbegin(); it != c.rend(); ++it) {
    acc = acc * s + *it;
  }
  return acc;
}

void Polynomial::trim(double rel_tol) {
  double scale = 0.0;
  for (double v : c) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) {
    c.clear();
    return;
  }
  while (!c.empty() && std::abs(c.back()) <= rel_tol * scale) {
    c.pop_back();
  }
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
  std::vector<double> out(std::max(c.size(), o.c.size()), 0.0);
  for (size_t k = 0; k < c.size(); ++k) out[k] += c[k];
  for (size_t k = 0; k < o.c.size(); ++k) out[k] += o.c[k];
  return Polynomial(std::move(out));
}

Polynomial Polynomial::operator-(const Polynomial& o) const {
  return *this + o.scaled(-1.0);
}

Polynomial Polynomial::operator*(const Polynomial& o) const {
  if (c.empty() || o.c.empty()) return Polynomial{};
  std::vector<double> out(c.size() + o.c.size() - 1, 0.0);
  for (size_t i = 0; i < c.size(); ++i) {
    for (size_t j = 0; j < o.c.size(); ++j) {
      out[i + j] += c[i] * o.c[j];
    }
  }
  return Polynomial(std::move(out));
}

Polynomial Polynomial::scaled(double k) const {
  std::vector<double> out(c);
  for (double& v : out) v *= k;
  return Polynomial(std::move(out));
}

Polynomial Polynomial::shifted_up(int powers) const {
  if (c.empty()) return Polynomial{};
  std::vector<double> out(c.size() + static_cast<size_t>(powers), 0.0);
  std::copy(c.begin(), c.end(), out.begin() + powers);
  return Polynomial(std::move(out));
}

PolyDivision divmod(const Polynomial& num, const Polynomial& den) {
  if (den.is_zero()) throw Error("polynomial division by zero polynomial");
  std::vector<double> rem(num.c);
  const int dn = den.degree();
  const int qn = num.degree() - dn;
  if (qn < 0) return {Polynomial{}, num};
  std::vector<double> quot(static_cast<size_t>(qn) + 1, 0.0);
  const double lead = den.c.back();
  for (int k = qn; k >= 0; --k) {
    const double f = rem[static_cast<size_t>(k + dn)] / lead;
    quot[static_cast<size_t>(k)] = f;
    for (int j = 0; j <= dn; ++j) {
      rem[static_cast<size_t>(k + j)] -= f * den.c[static_cast<size_t>(j)];
    }
  }
  Polynomial r(std::move(rem));
  return {Polynomial(std::move(quot)), std::move(r)};
}

RationalFunction cancel_common_s(RationalFunction f) {
  while (!f.num.is_zero() && f.num.degree() >= 1 && f.den.degree() >= 1 &&
         f.num.at(0) == 0.0 && f.den.at(0) == 0.0) {
    f.num.c.erase(f.num.c.begin());
    f.den.c.erase(f.den.c.begin());
  }
  return f;
}

Complex RationalFunction::eval(Complex s) const {
  return num.eval(s) / den.eval(s);
}

RationalFunction RationalFunction::monic() const {
  const double lead = den.leading();
  if (lead == 0.0) throw Error("rational function with zero denominator");
  return {num.scaled(1.0 / lead), den.scaled(1.0 / lead)};
}

RationalFunction RationalFunction::scaled(double k) const {
  return {num.scaled(k), den};
}

RationalFunction RationalFunction::times_s(int powers) const {
  return {num.shifted_up(powers), den};
}

RationalFunction RationalFunction::operator+(const RationalFunction& o) const {
  return {num * o.den + o.num * den, den * o.den};
}

RationalFunction RationalFunction::operator-(const RationalFunction& o) const {
  return {num * o.den - o.num * den, den * o.den};
}

Complex StateSpace::transfer(Complex s, int output) const {
  const int n = order();
  if (n == 0) return Complex(d(output), 0.0);
  CMat m = s * CMat::Identity(n, n) - a.cast<Complex>();
  CVec x = solve_checked(m, CVec(b.cast<Complex>()), "state-space transfer");
  Complex y(d(output), 0.0);
  for (int k = 0; k < n; ++k) y += Complex(c(output, k), 0.0) * x(k);
  return y;
}

StateSpace realize_controllable(const RationalFunction& g_in) {
  RationalFunction g = g_in.monic();
  if (g.relative_degree() < 0) {
    throw Error("cannot realize an improper transfer function");
  }
  const int n = g.den.degree();
  StateSpace ss;
  const double feed = (g.num.degree() == n) ? g.num.at(n) : 0.0;
  Polynomial sp = g.num - g.den.scaled(feed);
  ss.a = RMat::Zero(n, n);
  ss.b = RVec::Zero(n);
  ss.c = RMat::Zero(1, n);
  ss.d = RVec::Constant(1, feed);
  if (n == 0) return ss;
  for (int i = 0; i + 1 < n; ++i) ss.a(i, i + 1) = 1.0;
  for (int j = 0; j < n; ++j) ss.a(n - 1, j) = -g.den.at(j);
  ss.b(n - 1) = 1.0;
  for (int j = 0; j < n; ++j) ss.c(0, j) = sp.at(j);
  return ss;
}

SwingEquivalent extract_swing_equivalent(const RationalFunction& f) {
  if (f.num.is_zero()) throw Error("swing extraction of identically zero response");
  const int rel = f.relative_degree();
  if (rel < 0) throw Error("swing extraction requires a proper response");
  const double l = (rel == 0) ? f.num.leading() / f.den.leading() : 0.0;

  // G = F - L keeps the denominator; the leading numerator term cancels.
  Polynomial num_g = f.num - f.den.scaled(l);
  num_g.trim();
  if (num_g.is_zero()) throw Error("swing extraction: response has no dynamic part");

  // -1/G = (-den) / num_g must have a polynomial part linear in s.
  PolyDivision dv = divmod(f.den.scaled(-1.0), num_g);
  if (dv.quotient.degree() != 1) {
    throw Error("swing extraction: response does not reduce to swing form");
  }
  const double two_h = dv.quotient.at(1);
  const double q0 = dv.quotient.at(0);

  SwingEquivalent out;
  out.feedthrough_l = l;
  out.inertia_h = two_h / 2.0;
  // J = 2 H s - (-1/G) = -q0 - r/num_g.
  Polynomial num_j = num_g.scaled(-q0) - dv.remainder;
  num_j.trim();
  out.governor =
      cancel_common_s(RationalFunction{std::move(num_j), num_g}.monic());
  return out;
}

}  // namespace coidyn
