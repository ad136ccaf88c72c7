#pragma once

#include <optional>
#include <string>
#include <vector>

#include "coidyn/gfl.hpp"
#include "coidyn/network.hpp"
#include "coidyn/sg.hpp"

namespace coidyn {

// Load step applied as an admittance increment at a non-generator bus.
struct Disturbance {
  int bus = -1;
  Complex delta_admittance{0.0, 0.0};
  double time_s = 0.0;
};

enum class Integrator { kRk4, kRk45 };

struct SimConfig {
  double dt_s = 1e-3;
  double duration_s = 10.0;
  Integrator integrator = Integrator::kRk4;
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  int output_stride = 1;  // samples every stride-th step
};

struct SgDispatch {
  double p = 0.0;           // system pu, ignored for the slack machine
  double v_setpoint = 1.0;  // terminal voltage magnitude
  bool slack = false;
};

struct GflDispatch {
  double p = 0.0;
  double q = 0.0;
};

// Semantic case: network plus generator parameters and dispatch.
// sgs[i] pairs with net.sg_units[i], gfls[k] with net.gfl_buses[k].
struct SystemCase {
  double f_hz = 60.0;
  NetworkCase net;
  std::vector<SgParams> sgs;
  std::vector<SgDispatch> sg_dispatch;
  std::vector<GflParams> gfls;
  std::vector<GflDispatch> gfl_dispatch;
};

struct PowerFlowResult {
  CVec v_bus;
  CVec i_injection;  // generator injections per bus, zero elsewhere
  std::vector<Complex> sg_emf;
  std::vector<double> sg_pe0;  // system pu
  std::vector<GflOperatingPoint> gfl_ops;
  int iterations = 0;
};

// Damped fixed-point current-injection power flow over the physical buses
// with loads folded into the admittance matrix. Tolerance 1e-10, at most
// 200 iterations.
PowerFlowResult solve_power_flow(const SystemCase& sys);

// Everything the simulators derive once per case.
struct PreparedSystem {
  SystemCase sys;  // gfl input_power / i_q0 filled from the solved flow
  double omega0 = 0.0;
  PowerFlowResult flow;
  std::vector<LinearizationCoeffs> gfl_coeffs;
  std::vector<GflTransferFunctions> gfl_tfs;
  std::vector<GflEquivalent> gfl_equivalents;
  std::vector<GflLinearModel> gfl_linear;
  ReducedAdmittance red_pre, red_post;
  HybridInterfaceMatrix hyb_pre, hyb_post;
  CoiInterfaceMatrix coi_pre, coi_post;
  std::optional<Disturbance> disturbance;
};

PreparedSystem prepare_system(const SystemCase& sys,
                              const std::optional<Disturbance>& dist);

struct ScenarioResult {
  std::string variant;
  std::vector<std::string> signal_names;
  std::vector<double> time_s;
  std::vector<std::vector<double>> samples;  // samples[row][column]

  bool disturbed = false;
  double disturbance_time_s = 0.0;
  // Algebraic outputs at the disturbance instant with the pre- and
  // post-disturbance matrices, same states. Feeds the jump contracts.
  std::vector<double> snapshot_pre, snapshot_post;

  double runtime_s = 0.0;
  long steps = 0;

  int column(const std::string& name) const;
  std::vector<double> series(const std::string& name) const;
};

// Multi-machine swing + linear small-signal GFL blocks on the hybrid network.
ScenarioResult simulate_multi_generator(const PreparedSystem& prep,
                                        const SimConfig& cfg);

// All SGs collapsed to one COI machine; GFL blocks and ties preserved.
ScenarioResult simulate_coi(const PreparedSystem& prep, const SimConfig& cfg,
                            CoiEmfAverage emf_mode = CoiEmfAverage::kComplexMean);

// Nonlinear GFL states with direct network algebra; the in-repo reference.
ScenarioResult simulate_nonlinear_reference(const PreparedSystem& prep,
                                            const SimConfig& cfg);

// COI machine with the GFL current frozen at its initial phasor; the
// reported GFL power is the frozen pre-disturbance value.
ScenarioResult simulate_sfr_baseline(const PreparedSystem& prep,
                                     const SimConfig& cfg);

// GFL replaced by an EMF behind the (intentionally mis-set) filter
// reactance, prescribed from a reference trajectory.
ScenarioResult simulate_rotor_motion_baseline(const PreparedSystem& prep,
                                              const SimConfig& cfg,
                                              double x_filter_error_pct);

// Internal EMF implied by terminal conditions: U + jX I.
Complex rotor_internal_emf(Complex terminal, Complex current, double x_filter);

// Variant dispatch by name: multigen | coi (alias proposed) |
// reference (alias nonlinear) | sfr | rotor.
ScenarioResult simulate_variant(const PreparedSystem& prep, const SimConfig& cfg,
                                const std::string& variant,
                                double x_filter_error_pct = 0.0);

}  // namespace coidyn
