#pragma once

#include <string>

#include "coidyn/linalg.hpp"
#include "coidyn/lti.hpp"

namespace coidyn {

// GFL plant on the system frequency-dynamics time scale: constant input
// power into the DC link, d-axis PI on the DC voltage, PLL PI on the
// terminal phase, constant q-axis current. All quantities system pu.
struct GflParams {
  std::string name;
  int bus = 0;
  double rated_power = 1.0;
  double dc_capacitance = 0.0;       // pu-seconds
  double dc_voltage_setpoint = 1.0;  // pu
  double dc_voltage_initial = 1.0;   // steady value, equals the setpoint
  double kp_dc = 0.0, ki_dc = 0.0;
  double kp_pll = 0.0, ki_pll = 0.0;
  double i_q0 = 0.0;                 // constant q-axis current, set at init
  double input_power = 0.0;          // constant DC-side infeed, set at init
  double filter_x = 0.0;             // output filter reactance, system base
  double max_current = 1e9;          // operating-point feasibility limit
};

struct GflOperatingPoint {
  double p0 = 0.0, q0 = 0.0;  // injection into the network, system pu
  double u_f0 = 0.0;          // terminal voltage magnitude
  double theta_u0 = 0.0, theta_pll0 = 0.0, theta_i0 = 0.0;  // rad
  double i_d0 = 0.0, i_q0 = 0.0;
  Complex terminal{0.0, 0.0};
  Complex current{0.0, 0.0};  // injected current phasor I^F
};

struct LinearizationCoeffs {
  double c_pll = 0.0;  // detector gain: dU_FQ / d(theta_FU - theta_Pll)
  double c_pi = 0.0;   // current-phase transform: dtheta_FI / di_d
  double c_ei = 0.0;   // power vs current magnitude path: dP / di_d at fixed theta_FI
  double c_ep = 0.0;   // power vs voltage phase: dP / dtheta_FU (= -dP/dtheta_FI)
};

struct GflTransferFunctions {
  RationalFunction j_id;   // dP -> di_d
  RationalFunction j_pll;  // dP -> dtheta_Pll
};

struct GflEquivalent {
  double h_f_id = 0.0, h_f_pll = 0.0, h_f = 0.0;  // seconds
  double l_f_id = 0.0, l_f_pll = 0.0, l_f = 0.0;  // pu
  double a2 = 0.0, a1 = 0.0;  // governor numerator (monic denominator)
  double b1 = 0.0, b0 = 0.0;  // governor denominator coefficients
  double omega_osc_hz = 0.0;  // printed-form oscillation frequency
  double damped_freq_hz = 0.0;  // conventional damped natural frequency
  RationalFunction governor;    // J^{F,Pll}(s) = (a2 s^2 + a1 s)/(s^2 + b1 s + b0)
};

// Linear small-signal model: input dP (electrical power deviation),
// first 2 states realize j_id, last 4 realize j_pll.
struct GflLinearModel {
  enum Output {
    kThetaI = 0,    // dtheta_FI, rad
    kOmegaF,        // domega_F, pu (includes the L^F feedthrough)
    kOmegaFId,      // d-axis branch frequency component, pu
    kOmegaFPll,     // PLL branch frequency component, pu
    kOmegaCont,     // continuous part of domega_F (no feedthrough)
    kOmegaDisc,     // discontinuous part: exactly L^F * dP
    kId,            // di_d, pu
    kThetaPll,      // dtheta_Pll, rad
    kOutputCount
  };
  StateSpace ss;
  LinearizationCoeffs coeffs;
  GflOperatingPoint op;
  double omega0 = 0.0;
  double l_f = 0.0;
};

struct GflNonlinearState {
  double u_dc = 1.0;       // DC-link voltage, pu
  double x_dc = 0.0;       // DC PI integrator
  double x_pll = 0.0;      // PLL PI integrator, rad/s
  double theta_pll = 0.0;  // rad
};

struct GflNonlinearOutputs {
  double i_d = 0.0;
  double i_mag = 0.0;
  double theta_i = 0.0;
  Complex current{0.0, 0.0};
  double p_ele = 0.0;
  double dtheta_i_dt = 0.0;   // interface phase rate, rad/s
  double omega_pll_dev = 0.0; // PLL branch rate, rad/s
};

// Back-solve the steady state from terminal voltage and dispatch. The PLL
// locks to the terminal phase; currents follow i_d0 = -P/U, i_q0 = Q/U in
// the PLL frame. Idle dispatch (P = Q = 0) takes theta_i0 = theta_pll0 by
// convention.
GflOperatingPoint solve_operating_point(const GflParams& params,
                                        Complex terminal, double p_inject,
                                        double q_inject);

// Partial derivatives of the detector, phase transform, and power
// expression at the operating point. Requires nonzero current.
LinearizationCoeffs linearization_coefficients(const GflOperatingPoint& op);

// Close the small-signal loops into the two branch transfer functions.
// Denominators come out monic; common s factors are cancelled.
GflTransferFunctions assemble_transfer_functions(
    const GflParams& params, const LinearizationCoeffs& coeffs);

// Long-division of s J(s)/omega0 per branch into feedthrough, equivalent
// inertia, and the residual governor; then the combined H^F, L^F and the
// oscillation frequency of the governor denominator.
GflEquivalent extract_equivalents(const GflTransferFunctions& tfs,
                                  const LinearizationCoeffs& coeffs,
                                  double omega0);

GflLinearModel realize_linear_model(const GflTransferFunctions& tfs,
                                    const LinearizationCoeffs& coeffs,
                                    const GflOperatingPoint& op, double omega0);

// Interface current and electrical power implied by a nonlinear state.
GflNonlinearOutputs gfl_nonlinear_outputs(const GflNonlinearState& state,
                                          Complex terminal,
                                          const GflParams& params,
                                          const GflOperatingPoint& op);

// Right-hand side of the nonlinear model. Terminal voltage is an input
// (solved by the network). Throws on DC voltage collapse.
GflNonlinearState nonlinear_gfl_derivatives(const GflNonlinearState& state,
                                            Complex terminal,
                                            const GflParams& params,
                                            const GflOperatingPoint& op,
                                            GflNonlinearOutputs* outputs = nullptr);

}  // namespace coidyn
