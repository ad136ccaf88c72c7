#pragma once

#include <optional>
#include <string>
#include <vector>

#include "coidyn/sim.hpp"

namespace coidyn {

// Normalized integral error in percent over [t_start, end of reference grid]:
//   100 * integral |cmp - ref| dt / (max_t |ref(t) - ref(t_start)| * T).
// signed_area drops the absolute value, so cancellation is visible.
// The comparison series is interpolated onto the reference grid; it must
// cover the whole window. Throws when the reference never deviates.
double error_index(const std::vector<double>& time_ref,
                   const std::vector<double>& ref,
                   const std::vector<double>& time_cmp,
                   const std::vector<double>& cmp, double t_start,
                   bool signed_area = false);

// Same signal name looked up in both results.
double error_index(const ScenarioResult& reference,
                   const ScenarioResult& comparison, const std::string& signal,
                   double t_start, bool signed_area = false);

struct FrequencyMetrics {
  double max_rocof_pu_per_s = 0.0;  // signed value of largest magnitude
  double max_rocof_time_s = 0.0;
  double nadir_pu = 0.0;
  double nadir_time_s = 0.0;
  double steady_state_pu = 0.0;  // mean of the final 10% of samples
};

// Rates use centered differences; around switch_time they fall back to
// one-sided differences and the switch sample itself gets no rate.
FrequencyMetrics frequency_metrics(const std::vector<double>& time,
                                   const std::vector<double>& omega,
                                   std::optional<double> switch_time = {});

// Operating point, loop transfer functions, and swing equivalents for one
// converter against a pinned terminal phasor. The power-flow environment
// is bypassed so parameters can be varied one at a time.
struct LocalEquivalents {
  GflOperatingPoint op;
  LinearizationCoeffs coeffs;
  GflTransferFunctions tfs;
  GflEquivalent eq;
};

LocalEquivalents local_equivalents(GflParams gfl, Complex terminal, double p,
                                   double q, double omega0);

// Named scalar off a LocalEquivalents bundle. Names: h_f, l_f, h_f_id,
// h_f_pll, l_f_id, l_f_pll, a2, a1, b1, b0, omega_osc_hz, damped_freq_hz,
// c_pi, c_pll, c_ei, c_ep.
double equivalent_quantity(const LocalEquivalents& le, const std::string& name);

struct SweepSpec {
  std::string parameter;  // pll.kp, pll.ki, dc.kp, dc.ki, dispatch.p, dispatch.q
  std::vector<double> values;
  int gfl_index = 0;
  // Any equivalent_quantity name, plus the simulation metrics
  // max_rocof_pu_per_s, nadir_pu, nadir_time_s, steady_state_pu.
  std::vector<std::string> quantities;
};

struct SweepBase {
  SystemCase system;
  std::optional<Disturbance> disturbance;
  SimConfig sim;
};

struct SweepRow {
  double value = 0.0;
  bool ok = false;
  std::string message;              // failure reason when !ok
  std::vector<double> results;      // aligned with spec.quantities
};

struct SweepResult {
  SweepSpec spec;
  std::vector<SweepRow> rows;
  // Per quantity: strictly_increasing, strictly_decreasing, constant,
  // non_monotonic, or insufficient (fewer than two valid rows).
  std::vector<std::string> monotonicity;
};

// Rows run in parallel; each re-solves its own operating point, and rows
// that need simulation metrics run the single-node model on base.sim.
// A row whose operating point fails is marked invalid and the sweep
// continues.
SweepResult run_sweep(const SweepSpec& spec, const SweepBase& base);

// Central relative differences of each equivalent quantity with respect
// to each local parameter, at relative step 1e-3:
//   rel(i, j) = |q(p+) - q(p-)| / (2 h |q(p0)|).
struct SensitivityMatrix {
  std::vector<std::string> parameter_names;  // p0 q0 u_f0 kp_pll ki_pll kp_dc ki_dc
  std::vector<std::string> quantity_names;
  RMat relative;  // parameters x quantities

  static constexpr double kBlankTol = 1e-10;
  static constexpr double kMarkTol = 1e-6;
  bool blank(int parameter, int quantity) const;
  bool marked(int parameter, int quantity) const;
};

SensitivityMatrix sensitivity_matrix(const GflParams& gfl, Complex terminal,
                                     double p, double q, double omega0);

// Designed dependence pattern of the sensitivity matrix: true where a
// quantity responds to a parameter. Row/column order matches
// sensitivity_matrix output.
std::vector<std::vector<bool>> expected_dependence();

}  // namespace coidyn
