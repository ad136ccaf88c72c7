#include "coidyn/sg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coidyn/errors.hpp"

namespace coidyn {

SwingDerivatives swing_derivatives(double p_mech, double p_elec,
                                   double omega_dev, double h_s,
                                   double s_base, double omega0) {
  SwingDerivatives d;
  d.ddelta_dt = omega0 * omega_dev;
  d.domega_dt = (p_mech - p_elec) / (2.0 * h_s * s_base);
  return d;
}

double governor_derivative(double state, double omega_dev,
                           const GovernorParams& gov, double s_rated) {
  if (!gov.enabled) return 0.0;
  const double target = -gov.gain * s_rated * omega_dev;
  return (target - state) / gov.time_constant_s;
}

CoiAggregate aggregate_coi(const std::vector<SgParams>& members,
                           const std::vector<SgState>& states,
                           const std::vector<Complex>& emfs,
                           CoiEmfAverage mode) {
  if (members.empty()) throw Error("COI aggregation over an empty member list");
  if (states.size() != members.size() || emfs.size() != members.size()) {
    throw Error("COI aggregation: members, states, and EMFs must align");
  }

  // Canonical order keeps floating-point sums identical under reordering.
  std::vector<size_t> order(members.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (members[a].bus != members[b].bus) return members[a].bus < members[b].bus;
    return members[a].name < members[b].name;
  });

  double s_sum = 0.0, sh_sum = 0.0;
  double sh_omega = 0.0, sh_delta = 0.0;
  double gain_sum = 0.0, gain_t_sum = 0.0;
  Complex emf_sum{0.0, 0.0};
  double mag_sum = 0.0;
  for (size_t k : order) {
    const SgParams& m = members[k];
    const double sh = m.rated_power * m.inertia_h_s;
    s_sum += m.rated_power;
    sh_sum += sh;
    sh_omega += sh * states[k].omega_dev;
    sh_delta += sh * states[k].delta;
    emf_sum += emfs[k];
    mag_sum += std::abs(emfs[k]);
    if (m.governor.enabled) {
      gain_sum += m.governor.gain * m.rated_power;
      gain_t_sum += m.governor.gain * m.rated_power * m.governor.time_constant_s;
    }
  }
  if (!(sh_sum > 0.0)) throw Error("COI aggregation: total S*H must be positive");

  CoiAggregate agg;
  agg.s_total = s_sum;
  agg.h_coi_s = sh_sum / s_sum;
  agg.omega_coi_dev = sh_omega / sh_sum;
  agg.delta_coi = sh_delta / sh_sum;
  const double n = static_cast<double>(members.size());
  if (mode == CoiEmfAverage::kComplexMean) {
    agg.emf = emf_sum / n;
  } else {
    agg.emf = (mag_sum / n) * std::polar(1.0, agg.delta_coi);
  }
  if (gain_sum > 0.0) {
    agg.governor.enabled = true;
    agg.governor.gain = gain_sum / s_sum;  // on the s_total base
    agg.governor.time_constant_s = gain_t_sum / gain_sum;
  }
  return agg;
}

}  // namespace coidyn
