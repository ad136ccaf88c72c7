#include "coidyn/gfl.hpp"

#include <cmath>

#include "coidyn/errors.hpp"

namespace coidyn {

namespace {
constexpr double kPi = 3.14159265358979323846;
}  // namespace

GflOperatingPoint solve_operating_point(const GflParams& params,
                                        Complex terminal, double p_inject,
                                        double q_inject) {
  const double u = std::abs(terminal);
  if (!(u > 0.0)) {
    throw OperatingPointError("GFL operating point requires nonzero terminal voltage");
  }
  GflOperatingPoint op;
  op.p0 = p_inject;
  op.q0 = q_inject;
  op.terminal = terminal;
  op.u_f0 = u;
  op.theta_u0 = std::arg(terminal);
  op.theta_pll0 = op.theta_u0;  // steady PLL lock

  if (p_inject == 0.0 && q_inject == 0.0) {
    op.current = Complex(0.0, 0.0);
    op.i_d0 = 0.0;
    op.i_q0 = 0.0;
    op.theta_i0 = op.theta_pll0;  // idle converter convention
    return op;
  }

  op.current = Complex(p_inject, -q_inject) / std::conj(terminal);
  const double i_mag = std::abs(op.current);
  if (i_mag > params.max_current) {
    throw OperatingPointError("GFL operating point infeasible: |I| = " +
                              std::to_string(i_mag) + " exceeds limit " +
                              std::to_string(params.max_current));
  }
  // Rotate into the PLL frame; injection is -(i_d + j i_q) e^{j theta_pll}.
  const Complex i_dq = -op.current * std::polar(1.0, -op.theta_pll0);
  op.i_d0 = i_dq.real();
  op.i_q0 = i_dq.imag();
  op.theta_i0 = std::arg(op.current);
  return op;
}

LinearizationCoeffs linearization_coefficients(const GflOperatingPoint& op) {
  const double i_sq = op.i_d0 * op.i_d0 + op.i_q0 * op.i_q0;
  if (!(i_sq > 0.0)) {
    throw OperatingPointError(
        "linearization undefined at zero current (idle converter)");
  }
  const double i_mag = std::sqrt(i_sq);
  LinearizationCoeffs c;
  c.c_pll = op.u_f0 * std::cos(op.theta_u0 - op.theta_pll0);
  c.c_pi = -op.i_q0 / i_sq;
  c.c_ei = op.u_f0 * std::cos(op.theta_u0 - op.theta_i0) * (op.i_d0 / i_mag);
  c.c_ep = -op.u_f0 * i_mag * std::sin(op.theta_u0 - op.theta_i0);
  if (!(c.c_pll > 0.0)) {
    throw OperatingPointError("PLL detector gain must be positive at a valid lock");
  }
  return c;
}

GflTransferFunctions assemble_transfer_functions(
    const GflParams& params, const LinearizationCoeffs& coeffs) {
  const double u0c = params.dc_voltage_initial * params.dc_capacitance;
  if (!(u0c > 0.0)) {
    throw Error("DC link constant U^Dc0 * C^Dc must be positive");
  }
  GflTransferFunctions tfs;
  tfs.j_id = cancel_common_s(RationalFunction{
      Polynomial({params.ki_dc, params.kp_dc}),
      Polynomial({0.0, 0.0, u0c})}.monic());

  if (std::abs(coeffs.c_ep) < 1e-12) {
    throw OperatingPointError(
        "zero reactive-power operating point: the PLL power loop is not "
        "invertible (c_ep = 0)");
  }
  const double kappa = coeffs.c_pi * coeffs.c_ep - coeffs.c_ei;
  const double c4 = coeffs.c_ep * u0c;
  const double n3 = coeffs.c_pll * params.kp_pll * u0c;
  const double n2 = coeffs.c_pll *
                    (params.ki_pll * u0c + params.kp_pll * kappa * params.kp_dc);
  const double n1 = coeffs.c_pll * kappa *
                    (params.kp_pll * params.ki_dc + params.ki_pll * params.kp_dc);
  const double n0 = coeffs.c_pll * kappa * params.ki_pll * params.ki_dc;
  tfs.j_pll = cancel_common_s(RationalFunction{
      Polynomial({n0, n1, n2, n3}),
      Polynomial({0.0, 0.0, 0.0, 0.0, c4})}.monic());
  return tfs;
}

GflEquivalent extract_equivalents(const GflTransferFunctions& tfs,
                                  const LinearizationCoeffs& coeffs,
                                  double omega0) {
  GflEquivalent eq;

  const SwingEquivalent id =
      extract_swing_equivalent(tfs.j_id.times_s(1).scaled(1.0 / omega0));
  eq.h_f_id = id.inertia_h;
  eq.l_f_id = id.feedthrough_l;
  if (!id.governor.num.is_zero()) {
    throw Error("d-axis branch produced an unexpected equivalent governor");
  }

  const SwingEquivalent pll =
      extract_swing_equivalent(tfs.j_pll.times_s(1).scaled(1.0 / omega0));
  eq.h_f_pll = pll.inertia_h;
  eq.l_f_pll = pll.feedthrough_l;
  eq.governor = pll.governor;

  const int dn = eq.governor.den.degree();
  const int nn = eq.governor.num.degree();
  if (dn != 2 || nn > 2) {
    throw Error("equivalent governor degree structure violated: numerator "
                "degree " + std::to_string(nn) + ", denominator degree " +
                std::to_string(dn));
  }
  const double scale =
      std::max(std::abs(eq.governor.num.at(1)), std::abs(eq.governor.num.at(2)));
  if (std::abs(eq.governor.num.at(0)) > 1e-9 * scale) {
    throw Error("equivalent governor must vanish at s = 0");
  }
  eq.a2 = eq.governor.num.at(2);
  eq.a1 = eq.governor.num.at(1);
  eq.b1 = eq.governor.den.at(1);
  eq.b0 = eq.governor.den.at(0);
  // Rebuild with the constant term clamped to exactly zero.
  eq.governor = RationalFunction{Polynomial({0.0, eq.a1, eq.a2}),
                                 Polynomial({eq.b0, eq.b1, 1.0})};

  eq.h_f = 1.0 / (coeffs.c_pi / eq.h_f_id + 1.0 / eq.h_f_pll);
  eq.l_f = coeffs.c_pi * eq.l_f_id + eq.l_f_pll;

  const double radical = 4.0 * eq.b0 - eq.b1;  // printed form
  eq.omega_osc_hz = radical > 0.0 ? std::sqrt(radical) / (4.0 * kPi) : 0.0;
  const double damped = eq.b0 - eq.b1 * eq.b1 / 4.0;
  eq.damped_freq_hz = damped > 0.0 ? std::sqrt(damped) / (2.0 * kPi) : 0.0;
  return eq;
}

GflLinearModel realize_linear_model(const GflTransferFunctions& tfs,
                                    const LinearizationCoeffs& coeffs,
                                    const GflOperatingPoint& op, double omega0) {
  if (!tfs.j_id.is_strictly_proper() || !tfs.j_pll.is_strictly_proper()) {
    throw Error("GFL branch transfer functions must be strictly proper");
  }
  const StateSpace id = realize_controllable(tfs.j_id);
  const StateSpace pll = realize_controllable(tfs.j_pll);
  const int n1 = id.order(), n2 = pll.order();
  const int n = n1 + n2;

  GflLinearModel m;
  m.coeffs = coeffs;
  m.op = op;
  m.omega0 = omega0;

  StateSpace& ss = m.ss;
  ss.a = RMat::Zero(n, n);
  ss.a.topLeftCorner(n1, n1) = id.a;
  ss.a.bottomRightCorner(n2, n2) = pll.a;
  ss.b = RVec::Zero(n);
  ss.b.head(n1) = id.b;
  ss.b.tail(n2) = pll.b;

  ss.c = RMat::Zero(GflLinearModel::kOutputCount, n);
  ss.d = RVec::Zero(GflLinearModel::kOutputCount);

  RVec c_id = RVec::Zero(n), c_pll_row = RVec::Zero(n);
  c_id.head(n1) = id.c.row(0).transpose();
  c_pll_row.tail(n2) = pll.c.row(0).transpose();

  // Rate rows: y = C x gives dy/dt = C A x + C B u.
  RVec r_id = RVec::Zero(n), r_pll = RVec::Zero(n);
  r_id.head(n1) = (id.c.row(0) * id.a).transpose();
  r_pll.tail(n2) = (pll.c.row(0) * pll.a).transpose();
  const double d_id = id.c.row(0).dot(id.b);
  const double d_pll = pll.c.row(0).dot(pll.b);

  using M = GflLinearModel;
  ss.c.row(M::kId) = c_id.transpose();
  ss.c.row(M::kThetaPll) = c_pll_row.transpose();
  ss.c.row(M::kThetaI) = (coeffs.c_pi * c_id + c_pll_row).transpose();

  ss.c.row(M::kOmegaFId) = (coeffs.c_pi / omega0) * r_id.transpose();
  ss.d(M::kOmegaFId) = coeffs.c_pi * d_id / omega0;
  ss.c.row(M::kOmegaFPll) = r_pll.transpose() / omega0;
  ss.d(M::kOmegaFPll) = d_pll / omega0;

  ss.c.row(M::kOmegaF) = ss.c.row(M::kOmegaFId) + ss.c.row(M::kOmegaFPll);
  ss.d(M::kOmegaF) = ss.d(M::kOmegaFId) + ss.d(M::kOmegaFPll);

  ss.c.row(M::kOmegaCont) = ss.c.row(M::kOmegaF);
  ss.d(M::kOmegaCont) = 0.0;
  ss.d(M::kOmegaDisc) = ss.d(M::kOmegaF);

  m.l_f = ss.d(M::kOmegaF);
  return m;
}

GflNonlinearOutputs gfl_nonlinear_outputs(const GflNonlinearState& state,
                                          Complex terminal,
                                          const GflParams& params,
                                          const GflOperatingPoint& op) {
  GflNonlinearOutputs out;
  out.i_d = op.i_d0 + params.kp_dc * (params.dc_voltage_setpoint - state.u_dc) +
            params.ki_dc * state.x_dc;
  out.current = -Complex(out.i_d, op.i_q0) * std::polar(1.0, state.theta_pll);
  out.i_mag = std::hypot(out.i_d, op.i_q0);
  out.theta_i = std::arg(out.current);
  out.p_ele = (terminal * std::conj(out.current)).real();

  const double u = std::abs(terminal);
  const double u_fq = u * std::sin(std::arg(terminal) - state.theta_pll);
  out.omega_pll_dev = params.kp_pll * u_fq + params.ki_pll * state.x_pll;

  // Interface phase rate: PLL rate plus the current-phase transform term.
  const double du_dc = (params.input_power - out.p_ele) /
                       (params.dc_capacitance * state.u_dc);
  const double di_d = -params.kp_dc * du_dc +
                      params.ki_dc * (params.dc_voltage_setpoint - state.u_dc);
  const double i_sq = out.i_d * out.i_d + op.i_q0 * op.i_q0;
  const double c_pi_now = i_sq > 0.0 ? -op.i_q0 / i_sq : 0.0;
  out.dtheta_i_dt = out.omega_pll_dev + c_pi_now * di_d;
  return out;
}

GflNonlinearState nonlinear_gfl_derivatives(const GflNonlinearState& state,
                                            Complex terminal,
                                            const GflParams& params,
                                            const GflOperatingPoint& op,
                                            GflNonlinearOutputs* outputs) {
  if (!(state.u_dc > 0.0)) {
    throw Error("DC voltage collapse: U^Dc = " + std::to_string(state.u_dc));
  }
  const GflNonlinearOutputs out = gfl_nonlinear_outputs(state, terminal, params, op);
  if (outputs) *outputs = out;

  GflNonlinearState d;
  d.u_dc = (params.input_power - out.p_ele) /
           (params.dc_capacitance * state.u_dc);
  d.x_dc = params.dc_voltage_setpoint - state.u_dc;
  const double u = std::abs(terminal);
  d.x_pll = u * std::sin(std::arg(terminal) - state.theta_pll);
  d.theta_pll = out.omega_pll_dev;
  return d;
}

}  // namespace coidyn
