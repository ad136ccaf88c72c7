#pragma once

#include <string>
#include <vector>

#include "coidyn/linalg.hpp"

namespace coidyn {

// First-order droop governor: lag of -gain * speed deviation.
// gain is per-unit on the machine base; outputs are converted to the
// system base with the machine rating where used.
struct GovernorParams {
  bool enabled = false;
  double gain = 0.0;
  double time_constant_s = 1.0;
};

struct SgParams {
  std::string name;
  int bus = 0;
  double rated_power = 1.0;   // machine base, pu of system base
  double inertia_h_s = 0.0;   // on machine base
  double x_dprime = 0.0;      // system base
  GovernorParams governor;
};

struct SwingDerivatives {
  double ddelta_dt = 0.0;   // rad/s
  double domega_dt = 0.0;   // pu/s
};

// Classical swing equation. omega_dev in pu, powers in system pu,
// h_s on the base given by s_base (pass rated power for a machine,
// total rated power for the COI, 1 for already system-based inertia).
SwingDerivatives swing_derivatives(double p_mech, double p_elec,
                                   double omega_dev, double h_s,
                                   double s_base, double omega0);

// Lag-state derivative of the governor. State and output are in system pu.
double governor_derivative(double state, double omega_dev,
                           const GovernorParams& gov, double s_rated);

// Aggregate quantities of the COI frame.
struct CoiAggregate {
  double h_coi_s = 0.0;       // on s_total base
  double s_total = 0.0;
  double omega_coi_dev = 0.0; // SH-weighted speed deviation, pu
  double delta_coi = 0.0;     // SH-weighted angle, rad
  Complex emf{0.0, 0.0};      // aggregate EMF phasor
  GovernorParams governor;    // aggregate droop on the s_total base
};

enum class CoiEmfAverage {
  kComplexMean,         // arithmetic mean of the EMF phasors (default)
  kMagnitudeAngleMean,  // mean magnitude with the SH-weighted angle
};

struct SgState {
  double delta = 0.0;      // rad
  double omega_dev = 0.0;  // pu
};

// Weighted aggregation over members. Sums run in a canonical member order
// so the result is exactly invariant under input reordering.
CoiAggregate aggregate_coi(const std::vector<SgParams>& members,
                           const std::vector<SgState>& states,
                           const std::vector<Complex>& emfs,
                           CoiEmfAverage mode = CoiEmfAverage::kComplexMean);

}  // namespace coidyn
