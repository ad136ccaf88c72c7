#include "coidyn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "coidyn/errors.hpp"

namespace coidyn {

namespace {

double interpolate(const std::vector<double>& t, const std::vector<double>& v,
                   double x) {
  if (x <= t.front()) return v.front();
  if (x >= t.back()) return v.back();
  const auto it = std::upper_bound(t.begin(), t.end(), x);
  const size_t hi = static_cast<size_t>(it - t.begin());
  const size_t lo = hi - 1;
  const double span = t[hi] - t[lo];
  const double frac = span > 0.0 ? (x - t[lo]) / span : 0.0;
  return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace

double error_index(const std::vector<double>& time_ref,
                   const std::vector<double>& ref,
                   const std::vector<double>& time_cmp,
                   const std::vector<double>& cmp, double t_start,
                   bool signed_area) {
  if (time_ref.size() != ref.size() || time_cmp.size() != cmp.size()) {
    throw Error("error index: series and time grids must align");
  }
  if (time_ref.size() < 2 || time_cmp.size() < 2) {
    throw Error("error index: series too short");
  }
  const double t_end = time_ref.back();
  const double slack = 1e-9 * std::max(1.0, std::abs(t_end));
  if (t_start < time_ref.front() - slack || t_start >= t_end) {
    throw Error("error index: window start outside the reference domain");
  }
  if (time_cmp.front() > t_start + slack || time_cmp.back() < t_end - slack) {
    throw Error("error index: comparison series does not cover the window");
  }

  const double ref0 = interpolate(time_ref, ref, t_start);
  double integral = 0.0;
  double dev_max = 0.0;
  double prev_t = t_start;
  double prev_d = interpolate(time_cmp, cmp, t_start) - ref0;
  if (!signed_area) prev_d = std::abs(prev_d);
  for (size_t i = 0; i < time_ref.size(); ++i) {
    if (time_ref[i] <= t_start) continue;
    const double rv = ref[i];
    double d = interpolate(time_cmp, cmp, time_ref[i]) - rv;
    if (!signed_area) d = std::abs(d);
    integral += 0.5 * (prev_d + d) * (time_ref[i] - prev_t);
    dev_max = std::max(dev_max, std::abs(rv - ref0));
    prev_t = time_ref[i];
    prev_d = d;
  }
  if (!(dev_max > 0.0)) {
    throw Error("error index: reference deviation is zero over the window");
  }
  return 100.0 * integral / (dev_max * (t_end - t_start));
}

double error_index(const ScenarioResult& reference,
                   const ScenarioResult& comparison, const std::string& signal,
                   double t_start, bool signed_area) {
  return error_index(reference.time_s, reference.series(signal),
                     comparison.time_s, comparison.series(signal), t_start,
                     signed_area);
}

FrequencyMetrics frequency_metrics(const std::vector<double>& time,
                                   const std::vector<double>& omega,
                                   std::optional<double> switch_time) {
  const size_t n = time.size();
  if (n != omega.size()) throw Error("frequency metrics: series grids must align");
  if (n < 3) throw Error("frequency metrics: need at least 3 samples");

  // Index of the sample sitting on the switch instant, if any.
  long s = -1;
  if (switch_time && *switch_time > time.front() && *switch_time < time.back()) {
    s = static_cast<long>(
        std::lower_bound(time.begin(), time.end(), *switch_time) - time.begin());
  }

  FrequencyMetrics m;
  bool have_rate = false;
  for (long i = 0; i < static_cast<long>(n); ++i) {
    if (i == s) continue;  // switch sample carries pre-event values
    long lo = i > 0 ? i - 1 : i;
    long hi = i + 1 < static_cast<long>(n) ? i + 1 : i;
    if (lo == s) lo = i;
    if (hi == s) hi = i;
    if (lo == hi) continue;
    const double rate = (omega[static_cast<size_t>(hi)] -
                         omega[static_cast<size_t>(lo)]) /
                        (time[static_cast<size_t>(hi)] -
                         time[static_cast<size_t>(lo)]);
    if (!have_rate || std::abs(rate) > std::abs(m.max_rocof_pu_per_s)) {
      m.max_rocof_pu_per_s = rate;
      m.max_rocof_time_s = time[static_cast<size_t>(i)];
      have_rate = true;
    }
  }

  size_t nadir_at = 0;
  for (size_t i = 1; i < n; ++i) {
    if (omega[i] < omega[nadir_at]) nadir_at = i;
  }
  m.nadir_pu = omega[nadir_at];
  m.nadir_time_s = time[nadir_at];

  const size_t tail = std::max<size_t>(1, static_cast<size_t>(
                                              std::ceil(0.1 * static_cast<double>(n))));
  double sum = 0.0;
  for (size_t i = n - tail; i < n; ++i) sum += omega[i];
  m.steady_state_pu = sum / static_cast<double>(tail);
  return m;
}

LocalEquivalents local_equivalents(GflParams gfl, Complex terminal, double p,
                                   double q, double omega0) {
  LocalEquivalents le;
  le.op = solve_operating_point(gfl, terminal, p, q);
  gfl.input_power = le.op.p0;
  gfl.i_q0 = le.op.i_q0;
  le.coeffs = linearization_coefficients(le.op);
  le.tfs = assemble_transfer_functions(gfl, le.coeffs);
  le.eq = extract_equivalents(le.tfs, le.coeffs, omega0);
  return le;
}

double equivalent_quantity(const LocalEquivalents& le, const std::string& name) {
  if (name == "h_f") return le.eq.h_f;
  if (name == "l_f") return le.eq.l_f;
  if (name == "h_f_id") return le.eq.h_f_id;
  if (name == "h_f_pll") return le.eq.h_f_pll;
  if (name == "l_f_id") return le.eq.l_f_id;
  if (name == "l_f_pll") return le.eq.l_f_pll;
  if (name == "a2") return le.eq.a2;
  if (name == "a1") return le.eq.a1;
  if (name == "b1") return le.eq.b1;
  if (name == "b0") return le.eq.b0;
  if (name == "omega_osc_hz") return le.eq.omega_osc_hz;
  if (name == "damped_freq_hz") return le.eq.damped_freq_hz;
  if (name == "c_pi") return le.coeffs.c_pi;
  if (name == "c_pll") return le.coeffs.c_pll;
  if (name == "c_ei") return le.coeffs.c_ei;
  if (name == "c_ep") return le.coeffs.c_ep;
  throw ValidationError("quantity", "unknown quantity: " + name);
}

namespace {

bool is_metric_quantity(const std::string& name) {
  return name == "max_rocof_pu_per_s" || name == "nadir_pu" ||
         name == "nadir_time_s" || name == "steady_state_pu";
}

void apply_parameter(SystemCase& sys, const std::string& path, int g,
                     double value) {
  GflParams& gfl = sys.gfls[static_cast<size_t>(g)];
  GflDispatch& dis = sys.gfl_dispatch[static_cast<size_t>(g)];
  if (path == "pll.kp") {
    gfl.kp_pll = value;
  } else if (path == "pll.ki") {
    gfl.ki_pll = value;
  } else if (path == "dc.kp") {
    gfl.kp_dc = value;
  } else if (path == "dc.ki") {
    gfl.ki_dc = value;
  } else if (path == "dispatch.p") {
    dis.p = value;
  } else if (path == "dispatch.q") {
    dis.q = value;
  } else {
    throw ValidationError("sweep.parameter",
                          "unknown parameter path: " + path +
                              " (expected pll.kp, pll.ki, dc.kp, dc.ki, "
                              "dispatch.p, dispatch.q)");
  }
}

SweepRow evaluate_row(const SweepSpec& spec, const SweepBase& base,
                      double value, bool needs_sim) {
  SweepRow row;
  row.value = value;
  try {
    SystemCase sys = base.system;
    apply_parameter(sys, spec.parameter, spec.gfl_index, value);
    const PreparedSystem prep = prepare_system(
        sys, needs_sim ? base.disturbance : std::optional<Disturbance>{});
    const size_t g = static_cast<size_t>(spec.gfl_index);
    const GflOperatingPoint& op = prep.flow.gfl_ops[g];
    LocalEquivalents le{op, prep.gfl_coeffs[g], prep.gfl_tfs[g],
                        prep.gfl_equivalents[g]};

    FrequencyMetrics fm;
    if (needs_sim) {
      const ScenarioResult res = simulate_coi(prep, base.sim);
      fm = frequency_metrics(res.time_s, res.series("omega_coi_pu"),
                             res.disturbed
                                 ? std::optional<double>(res.disturbance_time_s)
                                 : std::nullopt);
    }
    for (const std::string& q : spec.quantities) {
      if (q == "max_rocof_pu_per_s") {
        row.results.push_back(fm.max_rocof_pu_per_s);
      } else if (q == "nadir_pu") {
        row.results.push_back(fm.nadir_pu);
      } else if (q == "nadir_time_s") {
        row.results.push_back(fm.nadir_time_s);
      } else if (q == "steady_state_pu") {
        row.results.push_back(fm.steady_state_pu);
      } else {
        row.results.push_back(equivalent_quantity(le, q));
      }
    }
    row.ok = true;
  } catch (const std::exception& e) {
    row.ok = false;
    row.message = e.what();
    row.results.clear();
  }
  return row;
}

std::string monotonicity_label(const std::vector<double>& q) {
  if (q.size() < 2) return "insufficient";
  double scale = 0.0;
  for (double v : q) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return "constant";
  const double tol = 1e-10 * scale;
  bool inc = true, dec = true, flat = true;
  for (size_t i = 0; i + 1 < q.size(); ++i) {
    const double d = q[i + 1] - q[i];
    if (!(d > tol)) inc = false;
    if (!(d < -tol)) dec = false;
    if (std::abs(d) > tol) flat = false;
  }
  if (flat) return "constant";
  if (inc) return "strictly_increasing";
  if (dec) return "strictly_decreasing";
  return "non_monotonic";
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, const SweepBase& base) {
  if (spec.values.empty()) {
    throw ValidationError("sweep.values", "value grid is empty");
  }
  if (spec.quantities.empty()) {
    throw ValidationError("sweep.quantities", "no quantities requested");
  }
  if (spec.gfl_index < 0 ||
      spec.gfl_index >= static_cast<int>(base.system.gfls.size())) {
    throw ValidationError("sweep.gfl_index", "converter index out of range");
  }
  bool needs_sim = false;
  for (const std::string& q : spec.quantities) {
    if (is_metric_quantity(q)) {
      needs_sim = true;
    } else {
      const LocalEquivalents probe;
      equivalent_quantity(probe, q);  // rejects unknown names up front
    }
  }
  if (needs_sim && !base.disturbance) {
    throw ValidationError("sweep.quantities",
                          "simulation metrics need a disturbance in the base case");
  }
  // Validate the parameter path once up front so a typo fails the sweep
  // rather than every row.
  {
    SystemCase probe = base.system;
    apply_parameter(probe, spec.parameter, spec.gfl_index, spec.values.front());
  }

  SweepResult out;
  out.spec = spec;
  std::vector<std::future<SweepRow>> futures;
  futures.reserve(spec.values.size());
  for (double v : spec.values) {
    futures.push_back(std::async(std::launch::async, evaluate_row,
                                 std::cref(spec), std::cref(base), v,
                                 needs_sim));
  }
  for (auto& f : futures) out.rows.push_back(f.get());

  for (size_t qi = 0; qi < spec.quantities.size(); ++qi) {
    std::vector<double> column;
    for (const SweepRow& r : out.rows) {
      if (r.ok) column.push_back(r.results[qi]);
    }
    out.monotonicity.push_back(monotonicity_label(column));
  }
  return out;
}

namespace {

const std::vector<std::string> kSensitivityParameters = {
    "p0", "q0", "u_f0", "kp_pll", "ki_pll", "kp_dc", "ki_dc"};

const std::vector<std::string> kSensitivityQuantities = {
    "c_pi", "h_f_id", "l_f_id", "h_f_pll", "l_f_pll", "a2",
    "a1",   "b1",     "b0",     "omega_osc_hz", "h_f", "l_f"};

}  // namespace

bool SensitivityMatrix::blank(int parameter, int quantity) const {
  return relative(parameter, quantity) <= kBlankTol;
}

bool SensitivityMatrix::marked(int parameter, int quantity) const {
  return relative(parameter, quantity) > kMarkTol;
}

SensitivityMatrix sensitivity_matrix(const GflParams& gfl, Complex terminal,
                                     double p, double q, double omega0) {
  const double h = 1e-3;
  SensitivityMatrix m;
  m.parameter_names = kSensitivityParameters;
  m.quantity_names = kSensitivityQuantities;
  const int np = static_cast<int>(m.parameter_names.size());
  const int nq = static_cast<int>(m.quantity_names.size());
  m.relative = RMat::Zero(np, nq);

  const LocalEquivalents base = local_equivalents(gfl, terminal, p, q, omega0);

  auto evaluate = [&](int param, double sign) {
    const double f = 1.0 + sign * h;
    GflParams g2 = gfl;
    Complex t2 = terminal;
    double p2 = p, q2 = q;
    switch (param) {
      case 0: p2 *= f; break;
      case 1: q2 *= f; break;
      case 2: t2 *= f; break;
      case 3: g2.kp_pll *= f; break;
      case 4: g2.ki_pll *= f; break;
      case 5: g2.kp_dc *= f; break;
      case 6: g2.ki_dc *= f; break;
    }
    return local_equivalents(g2, t2, p2, q2, omega0);
  };

  for (int pi = 0; pi < np; ++pi) {
    double v0 = 0.0;
    switch (pi) {
      case 0: v0 = p; break;
      case 1: v0 = q; break;
      case 2: v0 = std::abs(terminal); break;
      case 3: v0 = gfl.kp_pll; break;
      case 4: v0 = gfl.ki_pll; break;
      case 5: v0 = gfl.kp_dc; break;
      case 6: v0 = gfl.ki_dc; break;
    }
    if (v0 == 0.0) {
      throw ValidationError("sensitivity",
                            "parameter " + m.parameter_names[static_cast<size_t>(pi)] +
                                " is zero; relative perturbation undefined");
    }
    const LocalEquivalents plus = evaluate(pi, +1.0);
    const LocalEquivalents minus = evaluate(pi, -1.0);
    for (int qi = 0; qi < nq; ++qi) {
      const std::string& name = m.quantity_names[static_cast<size_t>(qi)];
      const double q0v = equivalent_quantity(base, name);
      const double dq = std::abs(equivalent_quantity(plus, name) -
                                 equivalent_quantity(minus, name));
      const double denom = 2.0 * h * (q0v != 0.0 ? std::abs(q0v) : 1.0);
      m.relative(pi, qi) = dq / denom;
    }
  }
  return m;
}

std::vector<std::vector<bool>> expected_dependence() {
  // Rows: p0 q0 u_f0 kp_pll ki_pll kp_dc ki_dc. Columns follow
  // sensitivity_matrix quantity order.
  const bool T = true, F = false;
  return {
      // c_pi  h_id  l_id  h_pll l_pll a2    a1    b1    b0    osc   h_f   l_f
      {T, F, F, F, F, F, F, F, F, F, T, T},  // p0
      {T, F, F, T, T, T, T, F, F, F, T, T},  // q0
      {T, F, F, T, T, T, T, T, T, T, T, T},  // u_f0
      {F, F, F, T, T, T, T, T, T, T, T, T},  // kp_pll
      {F, F, F, T, F, T, T, T, T, T, T, F},  // ki_pll
      {F, F, T, T, F, T, T, T, T, T, T, T},  // kp_dc
      {F, T, F, F, F, T, T, T, T, T, T, F},  // ki_dc
  };
}

}  // namespace coidyn
