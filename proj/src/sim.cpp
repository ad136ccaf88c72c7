#include "coidyn/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>

#include "coidyn/errors.hpp"

namespace coidyn {

namespace {

// ---------------------------------------------------------------- power flow

CMat bus_admittance(const NetworkCase& net) {
  // Physical buses only: the EMF rows of the assembled matrix are dropped
  // by rebuilding without SG units.
  NetworkCase buses_only = net;
  buses_only.sg_units.clear();
  return assemble_admittance(buses_only);
}

}  // namespace

PowerFlowResult solve_power_flow(const SystemCase& sys) {
  const int n = sys.net.bus_count;
  const CMat y = bus_admittance(sys.net);

  int slack = -1;
  for (size_t i = 0; i < sys.sgs.size(); ++i) {
    if (sys.sg_dispatch[i].slack) {
      if (slack >= 0) throw ValidationError("sg.dispatch.slack", "more than one slack machine");
      slack = static_cast<int>(i);
    }
  }
  if (slack < 0) throw ValidationError("sg.dispatch.slack", "no slack machine");

  CVec v = CVec::Ones(n);
  for (size_t i = 0; i < sys.sgs.size(); ++i) {
    v(sys.sgs[i].bus) = Complex(sys.sg_dispatch[i].v_setpoint, 0.0);
  }

  // Slack bus voltage is pinned by replacing its row with the identity.
  const int slack_bus = sys.sgs[static_cast<size_t>(slack)].bus;
  CMat a = y;
  a.row(slack_bus).setZero();
  a(slack_bus, slack_bus) = Complex(1.0, 0.0);
  CheckedLu lu(a, "power flow network matrix");

  // PV magnitude errors are folded back through the bus Thevenin reactance;
  // reading Q off Y*v directly couples with gain ~|Y_kk| and diverges.
  std::vector<double> x_thev(sys.sgs.size(), 0.0);
  for (size_t k = 0; k < sys.sgs.size(); ++k) {
    if (static_cast<int>(k) == slack) continue;
    CVec unit = CVec::Zero(n);
    unit(sys.sgs[k].bus) = Complex(1.0, 0.0);
    x_thev[k] = std::max(lu.solve(unit)(sys.sgs[k].bus).imag(), 1e-3);
  }
  std::vector<double> q_pv(sys.sgs.size(), 0.0);

  const double kDamping = 0.8;
  const double kTol = 1e-10;
  const int kMaxIter = 200;
  int iter = 0;
  for (;; ++iter) {
    if (iter >= kMaxIter) {
      throw ConvergenceError("power flow did not converge within 200 iterations");
    }
    CVec rhs = CVec::Zero(n);
    for (size_t k = 0; k < sys.sgs.size(); ++k) {
      const int bus = sys.sgs[k].bus;
      if (static_cast<int>(k) == static_cast<int>(slack)) continue;
      const Complex s(sys.sg_dispatch[k].p, q_pv[k]);
      rhs(bus) += std::conj(s / v(bus));
    }
    for (size_t k = 0; k < sys.gfls.size(); ++k) {
      const int bus = sys.gfls[k].bus;
      const Complex s(sys.gfl_dispatch[k].p, sys.gfl_dispatch[k].q);
      rhs(bus) += std::conj(s / v(bus));
    }
    rhs(slack_bus) = Complex(sys.sg_dispatch[static_cast<size_t>(slack)].v_setpoint, 0.0);

    const CVec v_new = lu.solve(rhs);
    double dq_max = 0.0;
    for (size_t k = 0; k < sys.sgs.size(); ++k) {
      if (static_cast<int>(k) == slack) continue;
      const int bus = sys.sgs[k].bus;
      const double v_set = sys.sg_dispatch[k].v_setpoint;
      const double dq = (v_set - std::abs(v_new(bus))) * v_set / x_thev[k];
      q_pv[k] += kDamping * dq;
      dq_max = std::max(dq_max, std::abs(dq));
    }
    const CVec v_next = v + kDamping * (v_new - v);

    const double delta =
        std::max((v_next - v).cwiseAbs().maxCoeff(), dq_max);
    v = v_next;
    if (delta <= kTol) break;
  }

  PowerFlowResult r;
  r.iterations = iter + 1;
  r.v_bus = v;
  r.i_injection = y * v;  // loads are inside y, so this is generator current
  for (size_t k = 0; k < sys.sgs.size(); ++k) {
    const int bus = sys.sgs[k].bus;
    const Complex i = r.i_injection(bus);
    r.sg_emf.push_back(v(bus) + Complex(0.0, sys.sgs[k].x_dprime) * i);
    r.sg_pe0.push_back((v(bus) * std::conj(i)).real());
  }
  for (size_t k = 0; k < sys.gfls.size(); ++k) {
    const int bus = sys.gfls[k].bus;
    const Complex s = v(bus) * std::conj(r.i_injection(bus));
    r.gfl_ops.push_back(
        solve_operating_point(sys.gfls[k], v(bus), s.real(), s.imag()));
  }
  return r;
}

PreparedSystem prepare_system(const SystemCase& sys,
                              const std::optional<Disturbance>& dist) {
  PreparedSystem p;
  p.sys = sys;
  p.omega0 = 2.0 * 3.14159265358979323846 * sys.f_hz;
  if (sys.sgs.size() != sys.sg_dispatch.size() ||
      sys.gfls.size() != sys.gfl_dispatch.size()) {
    throw ValidationError("case", "generator parameter/dispatch lists must align");
  }
  if (sys.net.sg_units.size() != sys.sgs.size() ||
      sys.net.gfl_buses.size() != sys.gfls.size()) {
    throw ValidationError("case", "network generator taps must align with generator lists");
  }

  p.flow = solve_power_flow(sys);
  for (size_t k = 0; k < sys.gfls.size(); ++k) {
    const GflOperatingPoint& op = p.flow.gfl_ops[k];
    p.sys.gfls[k].input_power = op.p0;
    p.sys.gfls[k].i_q0 = op.i_q0;
    p.gfl_coeffs.push_back(linearization_coefficients(op));
    p.gfl_tfs.push_back(assemble_transfer_functions(p.sys.gfls[k], p.gfl_coeffs[k]));
    p.gfl_equivalents.push_back(
        extract_equivalents(p.gfl_tfs[k], p.gfl_coeffs[k], p.omega0));
    p.gfl_linear.push_back(
        realize_linear_model(p.gfl_tfs[k], p.gfl_coeffs[k], op, p.omega0));
  }

  p.red_pre = kron_reduce(build_partitioned_admittance(sys.net));
  p.hyb_pre = hybrid_interface(p.red_pre);
  if (!sys.sgs.empty()) p.coi_pre = coi_interface(p.red_pre);

  if (dist) {
    const Disturbance& d = *dist;
    if (d.bus < 0 || d.bus >= sys.net.bus_count) {
      throw ValidationError("disturbance.bus", "bus index out of range");
    }
    for (const SgTap& sg : sys.net.sg_units) {
      if (sg.bus == d.bus) {
        throw ValidationError("disturbance.bus", "must be a non-generator bus");
      }
    }
    for (int bus : sys.net.gfl_buses) {
      if (bus == d.bus) {
        throw ValidationError("disturbance.bus", "must be a non-generator bus");
      }
    }
    if (d.time_s < 0.0) {
      throw ValidationError("disturbance.time_s", "must be non-negative");
    }
    NetworkCase net_post = sys.net;
    net_post.shunt_loads.push_back(ShuntLoad{d.bus, d.delta_admittance});
    p.red_post = kron_reduce(build_partitioned_admittance(net_post));
    p.hyb_post = hybrid_interface(p.red_post);
    if (!sys.sgs.empty()) p.coi_post = coi_interface(p.red_post);
    p.disturbance = d;
  }
  return p;
}

int ScenarioResult::column(const std::string& name) const {
  for (size_t i = 0; i < signal_names.size(); ++i) {
    if (signal_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<double> ScenarioResult::series(const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw Error("unknown signal: " + name);
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& row : samples) out.push_back(row[static_cast<size_t>(c)]);
  return out;
}

namespace {

// ------------------------------------------------------------ ODE machinery

struct OdeModel {
  virtual ~OdeModel() = default;
  virtual int state_size() const = 0;
  virtual RVec initial_state() const = 0;
  virtual void deriv(double t, const RVec& x, bool post, RVec& dx) const = 0;
  virtual std::vector<std::string> signal_names() const = 0;
  virtual std::vector<double> outputs(double t, const RVec& x, bool post) const = 0;
  virtual void check_health(const RVec& x) const = 0;
};

void rk4_step(const OdeModel& m, double t, double dt, bool post, RVec& x) {
  const int n = m.state_size();
  RVec k1(n), k2(n), k3(n), k4(n);
  m.deriv(t, x, post, k1);
  m.deriv(t + dt / 2.0, RVec(x + dt / 2.0 * k1), post, k2);
  m.deriv(t + dt / 2.0, RVec(x + dt / 2.0 * k2), post, k3);
  m.deriv(t + dt, RVec(x + dt * k3), post, k4);
  x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Dormand-Prince 5(4) over one segment with fixed dynamics.
void rk45_segment(const OdeModel& m, double t0, double t1, bool post,
                  double abs_tol, double rel_tol, RVec& x) {
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                      a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                      a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                      a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                      b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static const double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695,
                      e4 = b4 - 393.0 / 640, e5 = b5 + 92097.0 / 339200,
                      e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;

  const int n = m.state_size();
  RVec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  double t = t0;
  double h = t1 - t0;
  int guard = 0;
  while (t < t1) {
    if (++guard > 100000) {
      throw ConvergenceError("adaptive integrator stalled near t = " +
                             std::to_string(t));
    }
    h = std::min(h, t1 - t);
    m.deriv(t, x, post, k1);
    m.deriv(t + h / 5.0, RVec(x + h * (a21 * k1)), post, k2);
    m.deriv(t + 3.0 * h / 10.0, RVec(x + h * (a31 * k1 + a32 * k2)), post, k3);
    m.deriv(t + 4.0 * h / 5.0, RVec(x + h * (a41 * k1 + a42 * k2 + a43 * k3)),
            post, k4);
    m.deriv(t + 8.0 * h / 9.0,
            RVec(x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)), post, k5);
    m.deriv(t + h,
            RVec(x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)),
            post, k6);
    RVec x5 = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    m.deriv(t + h, x5, post, k7);
    RVec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double norm = 0.0;
    for (int i = 0; i < n; ++i) {
      const double scale =
          abs_tol + rel_tol * std::max(std::abs(x(i)), std::abs(x5(i)));
      norm = std::max(norm, std::abs(err(i)) / scale);
    }
    if (norm <= 1.0) {
      t += h;
      x = x5;
    }
    const double factor =
        norm > 0.0 ? 0.9 * std::pow(norm, -0.2) : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
    if (!(h > 0.0) || !std::isfinite(h)) {
      throw ConvergenceError("adaptive integrator produced a bad step size");
    }
  }
}

ScenarioResult drive(const OdeModel& model, const SimConfig& cfg,
                     const std::optional<double>& t_dist,
                     const std::string& variant) {
  if (!(cfg.dt_s > 0.0)) throw ValidationError("sim.dt_s", "must be positive");
  if (!(cfg.duration_s > cfg.dt_s)) {
    throw ValidationError("sim.duration_s", "must exceed dt_s");
  }
  if (cfg.output_stride < 1) {
    throw ValidationError("sim.output_stride", "must be at least 1");
  }
  const auto t_start = std::chrono::steady_clock::now();

  const long n_steps = std::lround(cfg.duration_s / cfg.dt_s);
  long m_dist = -1;
  if (t_dist) {
    m_dist = std::lround(*t_dist / cfg.dt_s);
    if (m_dist < 1) {
      throw ValidationError("disturbance.time_s",
                            "must be at least one integration step");
    }
    if (m_dist > n_steps) m_dist = -1;  // never fires inside the horizon
  }

  ScenarioResult res;
  res.variant = variant;
  res.signal_names = model.signal_names();

  RVec x = model.initial_state();
  {
    RVec dx(model.state_size());
    model.deriv(0.0, x, false, dx);
    const double residual = dx.cwiseAbs().maxCoeff();
    if (residual > 1e-8) {
      throw Error(variant + ": initial state is not an equilibrium (residual " +
                  std::to_string(residual) + ")");
    }
  }

  for (long step = 0; step <= n_steps; ++step) {
    const double t = static_cast<double>(step) * cfg.dt_s;
    const bool past = m_dist >= 0 && step > m_dist;
    if (step == m_dist) {
      res.disturbed = true;
      res.disturbance_time_s = t;
      res.snapshot_pre = model.outputs(t, x, false);
      res.snapshot_post = model.outputs(t, x, true);
    }
    if (step % cfg.output_stride == 0 || step == n_steps) {
      res.time_s.push_back(t);
      res.samples.push_back(model.outputs(t, x, past));
    }
    if (step == n_steps) break;

    const bool post = m_dist >= 0 && step >= m_dist;
    if (cfg.integrator == Integrator::kRk4) {
      rk4_step(model, t, cfg.dt_s, post, x);
    } else {
      rk45_segment(model, t, t + cfg.dt_s, post, cfg.abs_tol, cfg.rel_tol, x);
    }
    ++res.steps;
    if (!x.allFinite()) {
      throw Error(variant + ": state became non-finite at t = " +
                  std::to_string(t + cfg.dt_s));
    }
    model.check_health(x);
  }

  res.runtime_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
  return res;
}

// --------------------------------------------------------------- name helpers

std::string gname(size_t i) { return "g" + std::to_string(i + 1); }
std::string fname(size_t k) { return "f" + std::to_string(k + 1); }

// ------------------------------------------------------- multi-machine model

class MultiGenModel : public OdeModel {
 public:
  explicit MultiGenModel(const PreparedSystem& p) : p_(p) {
    n_sg_ = static_cast<int>(p.sys.sgs.size());
    n_gfl_ = static_cast<int>(p.sys.gfls.size());
    gfl_offset_.resize(static_cast<size_t>(n_gfl_));
    int off = 3 * n_sg_;
    for (int k = 0; k < n_gfl_; ++k) {
      gfl_offset_[static_cast<size_t>(k)] = off;
      off += p.gfl_linear[static_cast<size_t>(k)].ss.order();
    }
    n_states_ = off;
    for (int i = 0; i < n_sg_; ++i) {
      const Complex e = p.flow.sg_emf[static_cast<size_t>(i)];
      e0_.push_back(std::abs(e));
      delta0_.push_back(std::arg(e));
    }
    // Mechanical power pinned to the model's own electrical power at t0.
    RVec x0 = initial_state();
    CVec emf(n_sg_), i_f(n_gfl_), i_g(n_sg_), u_f(n_gfl_);
    std::vector<double> i_mag(static_cast<size_t>(n_gfl_)),
        th_i(static_cast<size_t>(n_gfl_));
    interface(x0, false, emf, i_f, i_g, u_f, i_mag, th_i);
    for (int i = 0; i < n_sg_; ++i) {
      pm0_.push_back((emf(i) * std::conj(i_g(i))).real());
    }
    for (int k = 0; k < n_gfl_; ++k) {
      pf0_.push_back((u_f(k) * std::conj(i_f(k))).real());
    }
  }

  int state_size() const override { return n_states_; }

  RVec initial_state() const override {
    RVec x = RVec::Zero(n_states_);
    for (int i = 0; i < n_sg_; ++i) x(3 * i) = delta0_[static_cast<size_t>(i)];
    return x;
  }

  void deriv(double t, const RVec& x, bool post, RVec& dx) const override {
    (void)t;
    CVec emf(n_sg_), i_f(n_gfl_), i_g(n_sg_), u_f(n_gfl_);
    std::vector<double> i_mag(static_cast<size_t>(n_gfl_)),
        th_i(static_cast<size_t>(n_gfl_));
    interface(x, post, emf, i_f, i_g, u_f, i_mag, th_i);

    dx.resize(n_states_);
    for (int i = 0; i < n_sg_; ++i) {
      const SgParams& sg = p_.sys.sgs[static_cast<size_t>(i)];
      const double omega_dev = x(3 * i + 1);
      const double gov = x(3 * i + 2);
      const double p_e = (emf(i) * std::conj(i_g(i))).real();
      const SwingDerivatives sw = swing_derivatives(
          pm0_[static_cast<size_t>(i)] + gov, p_e, omega_dev, sg.inertia_h_s,
          sg.rated_power, p_.omega0);
      dx(3 * i) = sw.ddelta_dt;
      dx(3 * i + 1) = sw.domega_dt;
      dx(3 * i + 2) =
          governor_derivative(gov, omega_dev, sg.governor, sg.rated_power);
    }
    for (int k = 0; k < n_gfl_; ++k) {
      const GflLinearModel& m = p_.gfl_linear[static_cast<size_t>(k)];
      const int off = gfl_offset_[static_cast<size_t>(k)];
      const int nk = m.ss.order();
      const double p_f = (u_f(k) * std::conj(i_f(k))).real();
      const double dp = p_f - pf0_[static_cast<size_t>(k)];
      dx.segment(off, nk) = m.ss.a * x.segment(off, nk) + m.ss.b * dp;
    }
  }

  std::vector<std::string> signal_names() const override {
    std::vector<std::string> s;
    for (size_t i = 0; i < static_cast<size_t>(n_sg_); ++i) {
      const std::string g = gname(i);
      s.push_back("delta_" + g + "_rad");
      s.push_back("omega_" + g + "_pu");
      s.push_back("p_" + g + "_ele_pu");
      s.push_back("p_" + g + "_mec_pu");
      s.push_back("p_" + g + "_loc_pu");
      s.push_back("p_" + g + "_tie_sg_pu");
      s.push_back("p_" + g + "_tie_f_pu");
    }
    s.push_back("omega_coi_pu");
    s.push_back("delta_coi_rad");
    for (size_t k = 0; k < static_cast<size_t>(n_gfl_); ++k) {
      const std::string f = fname(k);
      s.push_back("p_" + f + "_ele_pu");
      s.push_back("p_" + f + "_loc_pu");
      s.push_back("p_" + f + "_tie_g_pu");
      s.push_back("p_" + f + "_tie_f_pu");
      s.push_back("u_" + f + "_mag_pu");
      s.push_back("i_" + f + "_mag_pu");
      s.push_back("theta_" + f + "_i_rad");
      s.push_back("theta_" + f + "_i_minus_delta_coi_rad");
      s.push_back("omega_" + f + "_pu");
      s.push_back("omega_" + f + "_id_dev_pu");
      s.push_back("omega_" + f + "_pll_dev_pu");
      s.push_back("omega_" + f + "_cont_dev_pu");
      s.push_back("omega_" + f + "_disc_dev_pu");
    }
    return s;
  }

  std::vector<double> outputs(double t, const RVec& x, bool post) const override {
    (void)t;
    const HybridInterfaceMatrix& h = post ? p_.hyb_post : p_.hyb_pre;
    CVec emf(n_sg_), i_f(n_gfl_), i_g(n_sg_), u_f(n_gfl_);
    std::vector<double> i_mag(static_cast<size_t>(n_gfl_)),
        th_i(static_cast<size_t>(n_gfl_));
    interface(x, post, emf, i_f, i_g, u_f, i_mag, th_i);

    double sh = 0.0, sh_omega = 0.0, sh_delta = 0.0;
    for (int i = 0; i < n_sg_; ++i) {
      const SgParams& sg = p_.sys.sgs[static_cast<size_t>(i)];
      const double w = sg.rated_power * sg.inertia_h_s;
      sh += w;
      sh_omega += w * x(3 * i + 1);
      sh_delta += w * x(3 * i);
    }
    const double omega_coi = 1.0 + sh_omega / sh;
    const double delta_coi = sh_delta / sh;

    std::vector<double> out;
    for (int i = 0; i < n_sg_; ++i) {
      const double delta = x(3 * i);
      const double e = e0_[static_cast<size_t>(i)];
      const double p_e = (emf(i) * std::conj(i_g(i))).real();
      double tie_sg = 0.0, tie_f = 0.0;
      for (int j = 0; j < n_sg_; ++j) {
        if (j == i) continue;
        tie_sg += tie_power_sg_sg(e, delta, e0_[static_cast<size_t>(j)], x(3 * j),
                                  h.y_eq(i, j));
      }
      for (int k = 0; k < n_gfl_; ++k) {
        tie_f += tie_power_sg_gfl_sg_side(e, delta, i_mag[static_cast<size_t>(k)],
                                          th_i[static_cast<size_t>(k)], h.t_i(i, k));
      }
      out.push_back(delta);
      out.push_back(1.0 + x(3 * i + 1));
      out.push_back(p_e);
      out.push_back(pm0_[static_cast<size_t>(i)] + x(3 * i + 2));
      out.push_back(local_power_sg(e, h.y_eq(i, i)));
      out.push_back(tie_sg);
      out.push_back(tie_f);
    }
    out.push_back(omega_coi);
    out.push_back(delta_coi);

    for (int k = 0; k < n_gfl_; ++k) {
      const GflLinearModel& m = p_.gfl_linear[static_cast<size_t>(k)];
      const int off = gfl_offset_[static_cast<size_t>(k)];
      const int nk = m.ss.order();
      const auto xk = x.segment(off, nk);
      const double p_f = (u_f(k) * std::conj(i_f(k))).real();
      const double dp = p_f - pf0_[static_cast<size_t>(k)];

      double loc = local_power_gfl(i_mag[static_cast<size_t>(k)], h.z(k, k));
      double tie_g = 0.0, tie_ff = 0.0;
      for (int i = 0; i < n_sg_; ++i) {
        tie_g += tie_power_sg_gfl_gfl_side(
            e0_[static_cast<size_t>(i)], x(3 * i), i_mag[static_cast<size_t>(k)],
            th_i[static_cast<size_t>(k)], h.t_i(i, k));
      }
      for (int k2 = 0; k2 < n_gfl_; ++k2) {
        if (k2 == k) continue;
        tie_ff += tie_power_gfl_gfl(
            i_mag[static_cast<size_t>(k)], th_i[static_cast<size_t>(k)],
            i_mag[static_cast<size_t>(k2)], th_i[static_cast<size_t>(k2)],
            h.z(k, k2));
      }
      auto y_of = [&](GflLinearModel::Output o) {
        return m.ss.c.row(o).dot(RVec(xk)) + m.ss.d(o) * dp;
      };
      out.push_back(p_f);
      out.push_back(loc);
      out.push_back(tie_g);
      out.push_back(tie_ff);
      out.push_back(std::abs(u_f(k)));
      out.push_back(i_mag[static_cast<size_t>(k)]);
      out.push_back(th_i[static_cast<size_t>(k)]);
      out.push_back(th_i[static_cast<size_t>(k)] - delta_coi);
      out.push_back(1.0 + y_of(GflLinearModel::kOmegaF));
      out.push_back(y_of(GflLinearModel::kOmegaFId));
      out.push_back(y_of(GflLinearModel::kOmegaFPll));
      out.push_back(y_of(GflLinearModel::kOmegaCont));
      out.push_back(y_of(GflLinearModel::kOmegaDisc));
    }
    return out;
  }

  void check_health(const RVec& x) const override {
    for (int i = 0; i < n_sg_; ++i) {
      if (std::abs(x(3 * i + 1)) > 0.5) {
        throw Error("multigen: speed deviation exceeded 0.5 pu (diverging)");
      }
    }
  }

 private:
  void interface(const RVec& x, bool post, CVec& emf, CVec& i_f, CVec& i_g,
                 CVec& u_f, std::vector<double>& i_mag,
                 std::vector<double>& th_i) const {
    const HybridInterfaceMatrix& h = post ? p_.hyb_post : p_.hyb_pre;
    for (int i = 0; i < n_sg_; ++i) {
      emf(i) = std::polar(e0_[static_cast<size_t>(i)], x(3 * i));
    }
    for (int k = 0; k < n_gfl_; ++k) {
      const GflLinearModel& m = p_.gfl_linear[static_cast<size_t>(k)];
      const int off = gfl_offset_[static_cast<size_t>(k)];
      const auto xk = x.segment(off, m.ss.order());
      const double d_id = m.ss.c.row(GflLinearModel::kId).dot(RVec(xk));
      const double d_thi = m.ss.c.row(GflLinearModel::kThetaI).dot(RVec(xk));
      const double id_now = m.op.i_d0 + d_id;
      i_mag[static_cast<size_t>(k)] = std::hypot(id_now, m.op.i_q0);
      th_i[static_cast<size_t>(k)] = m.op.theta_i0 + d_thi;
      i_f(k) = std::polar(i_mag[static_cast<size_t>(k)],
                          th_i[static_cast<size_t>(k)]);
    }
    i_g = h.y_eq * emf + h.t_i * i_f;
    u_f = h.t_u * emf + h.z * i_f;
  }

  const PreparedSystem& p_;
  int n_sg_ = 0, n_gfl_ = 0, n_states_ = 0;
  std::vector<int> gfl_offset_;
  std::vector<double> e0_, delta0_, pm0_, pf0_;
};

// -------------------------------------------------------- single-node model

class CoiModel : public OdeModel {
 public:
  CoiModel(const PreparedSystem& p, CoiEmfAverage mode) : p_(p) {
    if (p.sys.sgs.empty()) throw Error("coi: no synchronous machines");
    n_gfl_ = static_cast<int>(p.sys.gfls.size());
    std::vector<SgState> states;
    for (const Complex& e : p.flow.sg_emf) {
      states.push_back(SgState{std::arg(e), 0.0});
    }
    agg_ = aggregate_coi(p.sys.sgs, states, p.flow.sg_emf, mode);
    e_coi_ = std::abs(agg_.emf);
    delta0_ = std::arg(agg_.emf);
    if (n_gfl_ > 0) {
      // Collapsing the machine nodes must keep the converter terminals where
      // the full network put them at t0: weight the EMFs by their tie columns.
      Complex num(0.0, 0.0), den(0.0, 0.0);
      for (int f = 0; f < p.hyb_pre.t_u.rows(); ++f) {
        for (int g = 0; g < p.hyb_pre.t_u.cols(); ++g) {
          num += p.hyb_pre.t_u(f, g) * p.flow.sg_emf[static_cast<size_t>(g)];
          den += p.hyb_pre.t_u(f, g);
        }
      }
      if (std::abs(den) > 0.0) {
        e_coi_ = std::abs(num / den);
        delta0_ = std::arg(num / den);
      }
    }

    gfl_offset_.resize(static_cast<size_t>(n_gfl_));
    int off = 3;
    for (int k = 0; k < n_gfl_; ++k) {
      gfl_offset_[static_cast<size_t>(k)] = off;
      off += p.gfl_linear[static_cast<size_t>(k)].ss.order();
    }
    n_states_ = off;

    RVec x0 = initial_state();
    Complex emf, i_coi;
    CVec i_f(n_gfl_), u_f(n_gfl_);
    std::vector<double> i_mag(static_cast<size_t>(n_gfl_)),
        th_i(static_cast<size_t>(n_gfl_));
    interface(x0, false, emf, i_f, i_coi, u_f, i_mag, th_i);
    pm0_ = (emf * std::conj(i_coi)).real();
    for (int k = 0; k < n_gfl_; ++k) {
      pf0_.push_back((u_f(k) * std::conj(i_f(k))).real());
    }
  }

  int state_size() const override { return n_states_; }

  RVec initial_state() const override {
    RVec x = RVec::Zero(n_states_);
    x(0) = delta0_;
    return x;
  }

  void deriv(double t, const RVec& x, bool post, RVec& dx) const override {
    (void)t;
    Complex emf, i_coi;
    CVec i_f(n_gfl_), u_f(n_gfl_);
    std::vector<double> i_mag(static_cast<size_t>(n_gfl_)),
        th_i(static_cast<size_t>(n_gfl_));
    interface(x, post, emf, i_f, i_coi, u_f, i_mag, th_i);

    dx.resize(n_states_);
    const double p_e = (emf * std::conj(i_coi)).real();
    const SwingDerivatives sw =
        swing_derivatives(pm0_ + x(2), p_e, x(1), agg_.h_coi_s, agg_.s_total,
                          p_.omega0);
    dx(0) = sw.ddelta_dt;
    dx(1) = sw.domega_dt;
    dx(2) = governor_derivative(x(2), x(1), agg_.governor, agg_.s_total);
    for (int k = 0; k < n_gfl_; ++k) {
      const GflLinearModel& m = p_.gfl_linear[static_cast<size_t>(k)];
      const int off = gfl_offset_[static_cast<size_t>(k)];
      const int nk = m.ss.order();
      const double dp =
          (u_f(k) * std::conj(i_f(k))).real() - pf0_[static_cast<size_t>(k)];
      dx.segment(off, nk) = m.ss.a * x.segment(off, nk) + m.ss.b * dp;
    }
  }

  std::vector<std::string> signal_names() const override {
    std::vector<std::string> s{"delta_coi_rad",  "omega_coi_pu",
                               "p_coi_ele_pu",   "p_coi_mec_pu",
                               "p_coi_loc_pu",   "p_coi_tie_f_pu"};
    for (size_t k = 0; k < static_cast<size_t>(n_gfl_); ++k) {
      const std::string f = fname(k);
      s.push_back("p_" + f + "_ele_pu");
      s.push_back("p_" + f + "_loc_pu");
      s.push_back("p_" + f + "_tie_g_pu");
      s.push_back("p_" + f + "_tie_f_pu");
      s.push_back("u_" + f + "_mag_pu");
      s.push_back("i_" + f + "_mag_pu");
      s.push_back("theta_" + f + "_i_rad");
      s.push_back("theta_" + f + "_i_minus_delta_coi_rad");
      s.push_back("omega_" + f + "_pu");
      s.push_back("omega_" + f + "_id_dev_pu");
      s.push_back("omega_" + f + "_pll_dev_pu");
      s.push_back("omega_" + f + "_cont_dev_pu");
      s.push_back("omega_" + f + "_disc_dev_pu");
    }
    return s;
  }

  std::vector<double> outputs(double t, const RVec& x, bool post) const override {
    (void)t;
    const CoiInterfaceMatrix& c = post ? p_.coi_post : p_.coi_pre;
    Complex emf, i_coi;
    CVec i_f(n_gfl_), u_f(n_gfl_);
    std::vector<double> i_mag(static_cast<size_t>(n_gfl_)),
        th_i(static_cast<size_t>(n_gfl_));
    interface(x, post, emf, i_f, i_coi, u_f, i_mag, th_i);

    const double delta = x(0);
    double tie_f = 0.0;
    for (int k = 0; k < n_gfl_; ++k) {
      tie_f += tie_power_sg_gfl_sg_side(e_coi_, delta, i_mag[static_cast<size_t>(k)],
                                        th_i[static_cast<size_t>(k)], c.t_i(k));
    }
    std::vector<double> out{delta,
                            1.0 + x(1),
                            (emf * std::conj(i_coi)).real(),
                            pm0_ + x(2),
                            local_power_sg(e_coi_, c.y_eq),
                            tie_f};
    for (int k = 0; k < n_gfl_; ++k) {
      const GflLinearModel& m = p_.gfl_linear[static_cast<size_t>(k)];
      const int off = gfl_offset_[static_cast<size_t>(k)];
      const auto xk = x.segment(off, m.ss.order());
      const double p_f = (u_f(k) * std::conj(i_f(k))).real();
      const double dp = p_f - pf0_[static_cast<size_t>(k)];
      double tie_ff = 0.0;
      for (int k2 = 0; k2 < n_gfl_; ++k2) {
        if (k2 == k) continue;
        tie_ff += tie_power_gfl_gfl(
            i_mag[static_cast<size_t>(k)], th_i[static_cast<size_t>(k)],
            i_mag[static_cast<size_t>(k2)], th_i[static_cast<size_t>(k2)],
            c.z(k, k2));
      }
      auto y_of = [&](GflLinearModel::Output o) {
        return m.ss.c.row(o).dot(RVec(xk)) + m.ss.d(o) * dp;
      };
      out.push_back(p_f);
      out.push_back(local_power_gfl(i_mag[static_cast<size_t>(k)], c.z(k, k)));
      out.push_back(tie_power_sg_gfl_gfl_side(e_coi_, delta,
                                              i_mag[static_cast<size_t>(k)],
                                              th_i[static_cast<size_t>(k)],
                                              c.t_i(k)));
      out.push_back(tie_ff);
      out.push_back(std::abs(u_f(k)));
      out.push_back(i_mag[static_cast<size_t>(k)]);
      out.push_back(th_i[static_cast<size_t>(k)]);
      out.push_back(th_i[static_cast<size_t>(k)] - delta);
      out.push_back(1.0 + y_of(GflLinearModel::kOmegaF));
      out.push_back(y_of(GflLinearModel::kOmegaFId));
      out.push_back(y_of(GflLinearModel::kOmegaFPll));
      out.push_back(y_of(GflLinearModel::kOmegaCont));
      out.push_back(y_of(GflLinearModel::kOmegaDisc));
    }
    return out;
  }

  void check_health(const RVec& x) const override {
    if (std::abs(x(1)) > 0.5) {
      throw Error("coi: speed deviation exceeded 0.5 pu (diverging)");
    }
  }

 private:
  void interface(const RVec& x, bool post, Complex& emf, CVec& i_f,
                 Complex& i_coi, CVec& u_f, std::vector<double>& i_mag,
                 std::vector<double>& th_i) const {
    const CoiInterfaceMatrix& c = post ? p_.coi_post : p_.coi_pre;
    emf = std::polar(e_coi_, x(0));
    for (int k = 0; k < n_gfl_; ++k) {
      const GflLinearModel& m = p_.gfl_linear[static_cast<size_t>(k)];
      const int off = gfl_offset_[static_cast<size_t>(k)];
      const auto xk = x.segment(off, m.ss.order());
      const double id_now =
          m.op.i_d0 + m.ss.c.row(GflLinearModel::kId).dot(RVec(xk));
      i_mag[static_cast<size_t>(k)] = std::hypot(id_now, m.op.i_q0);
      th_i[static_cast<size_t>(k)] =
          m.op.theta_i0 + m.ss.c.row(GflLinearModel::kThetaI).dot(RVec(xk));
      i_f(k) = std::polar(i_mag[static_cast<size_t>(k)],
                          th_i[static_cast<size_t>(k)]);
    }
    i_coi = c.y_eq * emf;
    for (int k = 0; k < n_gfl_; ++k) i_coi += c.t_i(k) * i_f(k);
    u_f = c.t_u * emf + c.z * i_f;
  }

  const PreparedSystem& p_;
  int n_gfl_ = 0, n_states_ = 0;
  CoiAggregate agg_;
  double e_coi_ = 0.0, delta0_ = 0.0, pm0_ = 0.0;
  std::vector<int> gfl_offset_;
  std::vector<double> pf0_;
};

// ------------------------------------------------------------- SFR baseline

class SfrModel : public OdeModel {
 public:
  explicit SfrModel(const PreparedSystem& p) : p_(p) {
    if (p.sys.sgs.empty()) throw Error("sfr: no synchronous machines");
    n_gfl_ = static_cast<int>(p.sys.gfls.size());
    std::vector<SgState> states;
    for (const Complex& e : p.flow.sg_emf) {
      states.push_back(SgState{std::arg(e), 0.0});
    }
    agg_ = aggregate_coi(p.sys.sgs, states, p.flow.sg_emf,
                         CoiEmfAverage::kComplexMean);
    e_coi_ = std::abs(agg_.emf);
    delta0_ = std::arg(agg_.emf);
    if (n_gfl_ > 0) {
      // Same tie-weighted collapse as the single-node model so the two
      // variants differ only in how the converters respond.
      Complex num(0.0, 0.0), den(0.0, 0.0);
      for (int f = 0; f < p.hyb_pre.t_u.rows(); ++f) {
        for (int g = 0; g < p.hyb_pre.t_u.cols(); ++g) {
          num += p.hyb_pre.t_u(f, g) * p.flow.sg_emf[static_cast<size_t>(g)];
          den += p.hyb_pre.t_u(f, g);
        }
      }
      if (std::abs(den) > 0.0) {
        e_coi_ = std::abs(num / den);
        delta0_ = std::arg(num / den);
      }
    }
    i_frozen_.resize(n_gfl_);
    for (int k = 0; k < n_gfl_; ++k) {
      i_frozen_(k) = p.flow.gfl_ops[static_cast<size_t>(k)].current;
    }
    const Complex emf0 = std::polar(e_coi_, delta0_);
    pm0_ = electrical_power(emf0, false);
    for (int k = 0; k < n_gfl_; ++k) {
      pf_frozen_.push_back(net_power(emf0, false, k));
    }
  }

  int state_size() const override { return 3; }

  RVec initial_state() const override {
    RVec x = RVec::Zero(3);
    x(0) = delta0_;
    return x;
  }

  void deriv(double t, const RVec& x, bool post, RVec& dx) const override {
    (void)t;
    const Complex emf = std::polar(e_coi_, x(0));
    const double p_e = electrical_power(emf, post);
    const SwingDerivatives sw =
        swing_derivatives(pm0_ + x(2), p_e, x(1), agg_.h_coi_s, agg_.s_total,
                          p_.omega0);
    dx.resize(3);
    dx(0) = sw.ddelta_dt;
    dx(1) = sw.domega_dt;
    dx(2) = governor_derivative(x(2), x(1), agg_.governor, agg_.s_total);
  }

  std::vector<std::string> signal_names() const override {
    std::vector<std::string> s{"delta_coi_rad", "omega_coi_pu",
                               "p_coi_ele_pu",  "p_coi_mec_pu",
                               "p_coi_loc_pu",  "p_coi_tie_f_pu"};
    for (size_t k = 0; k < static_cast<size_t>(n_gfl_); ++k) {
      const std::string f = fname(k);
      s.push_back("p_" + f + "_ele_pu");
      s.push_back("p_" + f + "_net_pu");
      s.push_back("i_" + f + "_mag_pu");
      s.push_back("theta_" + f + "_i_rad");
    }
    return s;
  }

  std::vector<double> outputs(double t, const RVec& x, bool post) const override {
    (void)t;
    const CoiInterfaceMatrix& c = post ? p_.coi_post : p_.coi_pre;
    const Complex emf = std::polar(e_coi_, x(0));
    double tie_f = 0.0;
    for (int k = 0; k < n_gfl_; ++k) {
      tie_f += tie_power_sg_gfl_sg_side(e_coi_, x(0), std::abs(i_frozen_(k)),
                                        std::arg(i_frozen_(k)), c.t_i(k));
    }
    std::vector<double> out{x(0),
                            1.0 + x(1),
                            electrical_power(emf, post),
                            pm0_ + x(2),
                            local_power_sg(e_coi_, c.y_eq),
                            tie_f};
    for (int k = 0; k < n_gfl_; ++k) {
      out.push_back(pf_frozen_[static_cast<size_t>(k)]);
      out.push_back(net_power(emf, post, k));
      out.push_back(std::abs(i_frozen_(k)));
      out.push_back(std::arg(i_frozen_(k)));
    }
    return out;
  }

  void check_health(const RVec& x) const override {
    if (std::abs(x(1)) > 0.5) {
      throw Error("sfr: speed deviation exceeded 0.5 pu (diverging)");
    }
  }

 private:
  double electrical_power(Complex emf, bool post) const {
    const CoiInterfaceMatrix& c = post ? p_.coi_post : p_.coi_pre;
    Complex i = c.y_eq * emf;
    for (int k = 0; k < n_gfl_; ++k) i += c.t_i(k) * i_frozen_(k);
    return (emf * std::conj(i)).real();
  }

  // Power the network actually delivers at the frozen injection; the
  // converter model itself assumes its output power never moves.
  double net_power(Complex emf, bool post, int k) const {
    const CoiInterfaceMatrix& c = post ? p_.coi_post : p_.coi_pre;
    Complex u = c.t_u(k) * emf;
    for (int k2 = 0; k2 < n_gfl_; ++k2) u += c.z(k, k2) * i_frozen_(k2);
    return (u * std::conj(i_frozen_(k))).real();
  }

  const PreparedSystem& p_;
  int n_gfl_ = 0;
  CoiAggregate agg_;
  double e_coi_ = 0.0, delta0_ = 0.0, pm0_ = 0.0;
  CVec i_frozen_;
  std::vector<double> pf_frozen_;
};

// ------------------------------------------------------- nonlinear reference

class ReferenceModel : public OdeModel {
 public:
  explicit ReferenceModel(const PreparedSystem& p) : p_(p) {
    n_sg_ = static_cast<int>(p.sys.sgs.size());
    n_gfl_ = static_cast<int>(p.sys.gfls.size());
    n_states_ = 3 * n_sg_ + 4 * n_gfl_;
    for (int i = 0; i < n_sg_; ++i) {
      const Complex e = p.flow.sg_emf[static_cast<size_t>(i)];
      e0_.push_back(std::abs(e));
      delta0_.push_back(std::arg(e));
    }
    RVec x0 = initial_state();
    CVec emf(n_sg_), i_f(n_gfl_), i_g(n_sg_), u_f(n_gfl_);
    interface(x0, false, emf, i_f, i_g, u_f);
    for (int i = 0; i < n_sg_; ++i) {
      pm0_.push_back((emf(i) * std::conj(i_g(i))).real());
    }
  }

  int state_size() const override { return n_states_; }

  RVec initial_state() const override {
    RVec x = RVec::Zero(n_states_);
    for (int i = 0; i < n_sg_; ++i) x(3 * i) = delta0_[static_cast<size_t>(i)];
    for (int k = 0; k < n_gfl_; ++k) {
      const int off = 3 * n_sg_ + 4 * k;
      x(off) = p_.sys.gfls[static_cast<size_t>(k)].dc_voltage_initial;
      x(off + 3) = p_.flow.gfl_ops[static_cast<size_t>(k)].theta_pll0;
    }
    return x;
  }

  GflNonlinearState gfl_state(const RVec& x, int k) const {
    const int off = 3 * n_sg_ + 4 * k;
    return GflNonlinearState{x(off), x(off + 1), x(off + 2), x(off + 3)};
  }

  // Converter current is fixed by the converter state alone, so the
  // network solve is a direct linear evaluation with no iteration.
  void interface(const RVec& x, bool post, CVec& emf, CVec& i_f, CVec& i_g,
                 CVec& u_f) const {
    const HybridInterfaceMatrix& h = post ? p_.hyb_post : p_.hyb_pre;
    for (int i = 0; i < n_sg_; ++i) {
      emf(i) = std::polar(e0_[static_cast<size_t>(i)], x(3 * i));
    }
    for (int k = 0; k < n_gfl_; ++k) {
      const GflParams& g = p_.sys.gfls[static_cast<size_t>(k)];
      const GflNonlinearState s = gfl_state(x, k);
      const double i_d = p_.flow.gfl_ops[static_cast<size_t>(k)].i_d0 +
                         g.kp_dc * (g.dc_voltage_setpoint - s.u_dc) +
                         g.ki_dc * s.x_dc;
      i_f(k) = -Complex(i_d, g.i_q0) * std::polar(1.0, s.theta_pll);
    }
    i_g = h.y_eq * emf + h.t_i * i_f;
    u_f = h.t_u * emf + h.z * i_f;
  }

  void deriv(double t, const RVec& x, bool post, RVec& dx) const override {
    (void)t;
    CVec emf(n_sg_), i_f(n_gfl_), i_g(n_sg_), u_f(n_gfl_);
    interface(x, post, emf, i_f, i_g, u_f);
    dx.resize(n_states_);
    for (int i = 0; i < n_sg_; ++i) {
      const SgParams& sg = p_.sys.sgs[static_cast<size_t>(i)];
      const double p_e = (emf(i) * std::conj(i_g(i))).real();
      const SwingDerivatives sw = swing_derivatives(
          pm0_[static_cast<size_t>(i)] + x(3 * i + 2), p_e, x(3 * i + 1),
          sg.inertia_h_s, sg.rated_power, p_.omega0);
      dx(3 * i) = sw.ddelta_dt;
      dx(3 * i + 1) = sw.domega_dt;
      dx(3 * i + 2) = governor_derivative(x(3 * i + 2), x(3 * i + 1),
                                          sg.governor, sg.rated_power);
    }
    for (int k = 0; k < n_gfl_; ++k) {
      const int off = 3 * n_sg_ + 4 * k;
      const GflNonlinearState ds = nonlinear_gfl_derivatives(
          gfl_state(x, k), u_f(k), p_.sys.gfls[static_cast<size_t>(k)],
          p_.flow.gfl_ops[static_cast<size_t>(k)]);
      dx(off) = ds.u_dc;
      dx(off + 1) = ds.x_dc;
      dx(off + 2) = ds.x_pll;
      dx(off + 3) = ds.theta_pll;
    }
  }

  std::vector<std::string> signal_names() const override {
    std::vector<std::string> s;
    for (size_t i = 0; i < static_cast<size_t>(n_sg_); ++i) {
      const std::string g = gname(i);
      s.push_back("delta_" + g + "_rad");
      s.push_back("omega_" + g + "_pu");
      s.push_back("p_" + g + "_ele_pu");
      s.push_back("p_" + g + "_mec_pu");
      s.push_back("p_" + g + "_loc_pu");
      s.push_back("p_" + g + "_tie_sg_pu");
      s.push_back("p_" + g + "_tie_f_pu");
    }
    s.push_back("omega_coi_pu");
    s.push_back("delta_coi_rad");
    for (size_t k = 0; k < static_cast<size_t>(n_gfl_); ++k) {
      const std::string f = fname(k);
      s.push_back("p_" + f + "_ele_pu");
      s.push_back("p_" + f + "_loc_pu");
      s.push_back("p_" + f + "_tie_g_pu");
      s.push_back("p_" + f + "_tie_f_pu");
      s.push_back("u_" + f + "_mag_pu");
      s.push_back("i_" + f + "_mag_pu");
      s.push_back("theta_" + f + "_i_rad");
      s.push_back("theta_" + f + "_i_minus_delta_coi_rad");
      s.push_back("omega_" + f + "_pu");
      s.push_back("omega_" + f + "_id_dev_pu");
      s.push_back("omega_" + f + "_pll_dev_pu");
      s.push_back("u_dc_" + f + "_pu");
    }
    return s;
  }

  std::vector<double> outputs(double t, const RVec& x, bool post) const override {
    (void)t;
    const HybridInterfaceMatrix& h = post ? p_.hyb_post : p_.hyb_pre;
    CVec emf(n_sg_), i_f(n_gfl_), i_g(n_sg_), u_f(n_gfl_);
    interface(x, post, emf, i_f, i_g, u_f);

    double sh = 0.0, sh_omega = 0.0, sh_delta = 0.0;
    for (int i = 0; i < n_sg_; ++i) {
      const SgParams& sg = p_.sys.sgs[static_cast<size_t>(i)];
      const double w = sg.rated_power * sg.inertia_h_s;
      sh += w;
      sh_omega += w * x(3 * i + 1);
      sh_delta += w * x(3 * i);
    }
    const double delta_coi = sh_delta / sh;

    std::vector<double> out;
    for (int i = 0; i < n_sg_; ++i) {
      const double e = e0_[static_cast<size_t>(i)];
      double tie_sg = 0.0, tie_f = 0.0;
      for (int j = 0; j < n_sg_; ++j) {
        if (j == i) continue;
        tie_sg += tie_power_sg_sg(e, x(3 * i), e0_[static_cast<size_t>(j)],
                                  x(3 * j), h.y_eq(i, j));
      }
      for (int k = 0; k < n_gfl_; ++k) {
        tie_f += tie_power_sg_gfl_sg_side(e, x(3 * i), std::abs(i_f(k)),
                                          std::arg(i_f(k)), h.t_i(i, k));
      }
      out.push_back(x(3 * i));
      out.push_back(1.0 + x(3 * i + 1));
      out.push_back((emf(i) * std::conj(i_g(i))).real());
      out.push_back(pm0_[static_cast<size_t>(i)] + x(3 * i + 2));
      out.push_back(local_power_sg(e, h.y_eq(i, i)));
      out.push_back(tie_sg);
      out.push_back(tie_f);
    }
    out.push_back(1.0 + sh_omega / sh);
    out.push_back(delta_coi);

    for (int k = 0; k < n_gfl_; ++k) {
      GflNonlinearOutputs go = gfl_nonlinear_outputs(
          gfl_state(x, k), u_f(k), p_.sys.gfls[static_cast<size_t>(k)],
          p_.flow.gfl_ops[static_cast<size_t>(k)]);
      double tie_g = 0.0, tie_ff = 0.0;
      for (int i = 0; i < n_sg_; ++i) {
        tie_g += tie_power_sg_gfl_gfl_side(e0_[static_cast<size_t>(i)],
                                           x(3 * i), go.i_mag, go.theta_i,
                                           h.t_i(i, k));
      }
      for (int k2 = 0; k2 < n_gfl_; ++k2) {
        if (k2 == k) continue;
        tie_ff += tie_power_gfl_gfl(go.i_mag, go.theta_i, std::abs(i_f(k2)),
                                    std::arg(i_f(k2)), h.z(k, k2));
      }
      out.push_back(go.p_ele);
      out.push_back(local_power_gfl(go.i_mag, h.z(k, k)));
      out.push_back(tie_g);
      out.push_back(tie_ff);
      out.push_back(std::abs(u_f(k)));
      out.push_back(go.i_mag);
      out.push_back(go.theta_i);
      out.push_back(go.theta_i - delta_coi);
      out.push_back(1.0 + go.dtheta_i_dt / p_.omega0);
      out.push_back((go.dtheta_i_dt - go.omega_pll_dev) / p_.omega0);
      out.push_back(go.omega_pll_dev / p_.omega0);
      out.push_back(gfl_state(x, k).u_dc);
    }
    return out;
  }

  void check_health(const RVec& x) const override {
    for (int i = 0; i < n_sg_; ++i) {
      if (std::abs(x(3 * i + 1)) > 0.5) {
        throw Error("reference: speed deviation exceeded 0.5 pu (diverging)");
      }
    }
  }

  int sg_count() const { return n_sg_; }
  int gfl_count() const { return n_gfl_; }

 private:
  const PreparedSystem& p_;
  int n_sg_ = 0, n_gfl_ = 0, n_states_ = 0;
  std::vector<double> e0_, delta0_, pm0_;
};

// -------------------------------------------------------------- rotor model

// Piecewise-linear complex trajectory sampled on the integration grid,
// split at the disturbance because the terminal solution jumps there.
struct PrescribedEmf {
  double dt = 0.0;
  long m_dist = -1;  // step index of the switch, -1 when undisturbed
  std::vector<CVec> pre;   // steps 0 .. (m_dist or n)
  std::vector<CVec> post;  // steps m_dist .. n, empty when undisturbed

  CVec eval(double t, bool use_post) const {
    const std::vector<CVec>& seg = use_post ? post : pre;
    const long base = use_post ? m_dist : 0;
    double pos = t / dt - static_cast<double>(base);
    const long last = static_cast<long>(seg.size()) - 1;
    if (pos <= 0.0) return seg.front();
    if (pos >= static_cast<double>(last)) return seg.back();
    const long j = static_cast<long>(pos);
    const double frac = pos - static_cast<double>(j);
    return seg[static_cast<size_t>(j)] +
           frac * (seg[static_cast<size_t>(j + 1)] - seg[static_cast<size_t>(j)]);
  }
};

class RotorModel : public OdeModel {
 public:
  RotorModel(const PreparedSystem& p, const SimConfig& cfg,
             double x_filter_error_pct)
      : p_(p) {
    n_sg_ = static_cast<int>(p.sys.sgs.size());
    n_gfl_ = static_cast<int>(p.sys.gfls.size());
    for (int i = 0; i < n_sg_; ++i) {
      const Complex e = p.flow.sg_emf[static_cast<size_t>(i)];
      e0_.push_back(std::abs(e));
      delta0_.push_back(std::arg(e));
    }
    for (int k = 0; k < n_gfl_; ++k) {
      const double xf = p.sys.gfls[static_cast<size_t>(k)].filter_x;
      if (!(xf > 0.0)) {
        throw ValidationError("gfl.filter_x",
                              "rotor baseline needs a positive filter reactance");
      }
      x_eff_.push_back(xf * (1.0 + x_filter_error_pct / 100.0));
    }

    build_prescription(cfg);
    for (int k = 0; k < n_gfl_; ++k) {
      e_mag0_.push_back(std::abs(prescription_.pre.front()(k)));
    }
    build_networks();

    RVec x0 = initial_state();
    CVec emf(n_sg_ + n_gfl_), cur(n_sg_ + n_gfl_);
    node_solution(0.0, x0, false, emf, cur);
    for (int i = 0; i < n_sg_; ++i) {
      pm0_.push_back((emf(i) * std::conj(cur(i))).real());
    }
  }

  int state_size() const override { return 3 * n_sg_; }

  RVec initial_state() const override {
    RVec x = RVec::Zero(3 * n_sg_);
    for (int i = 0; i < n_sg_; ++i) x(3 * i) = delta0_[static_cast<size_t>(i)];
    return x;
  }

  void deriv(double t, const RVec& x, bool post, RVec& dx) const override {
    CVec emf(n_sg_ + n_gfl_), cur(n_sg_ + n_gfl_);
    node_solution(t, x, post, emf, cur);
    dx.resize(3 * n_sg_);
    for (int i = 0; i < n_sg_; ++i) {
      const SgParams& sg = p_.sys.sgs[static_cast<size_t>(i)];
      const double p_e = (emf(i) * std::conj(cur(i))).real();
      const SwingDerivatives sw = swing_derivatives(
          pm0_[static_cast<size_t>(i)] + x(3 * i + 2), p_e, x(3 * i + 1),
          sg.inertia_h_s, sg.rated_power, p_.omega0);
      dx(3 * i) = sw.ddelta_dt;
      dx(3 * i + 1) = sw.domega_dt;
      dx(3 * i + 2) = governor_derivative(x(3 * i + 2), x(3 * i + 1),
                                          sg.governor, sg.rated_power);
    }
  }

  std::vector<std::string> signal_names() const override {
    std::vector<std::string> s;
    for (size_t i = 0; i < static_cast<size_t>(n_sg_); ++i) {
      const std::string g = gname(i);
      s.push_back("delta_" + g + "_rad");
      s.push_back("omega_" + g + "_pu");
      s.push_back("p_" + g + "_ele_pu");
      s.push_back("p_" + g + "_mec_pu");
      s.push_back("p_" + g + "_loc_pu");
      s.push_back("p_" + g + "_tie_sg_pu");
      s.push_back("p_" + g + "_tie_f_pu");
    }
    s.push_back("omega_coi_pu");
    s.push_back("delta_coi_rad");
    for (size_t k = 0; k < static_cast<size_t>(n_gfl_); ++k) {
      const std::string f = fname(k);
      s.push_back("p_" + f + "_ele_pu");
      s.push_back("i_" + f + "_mag_pu");
      s.push_back("delta_int_" + f + "_rad");
      s.push_back("e_int_" + f + "_pu");
    }
    return s;
  }

  std::vector<double> outputs(double t, const RVec& x, bool post) const override {
    const CMat& y = post ? y_post_ : y_pre_;
    CVec emf(n_sg_ + n_gfl_), cur(n_sg_ + n_gfl_);
    node_solution(t, x, post, emf, cur);

    double sh = 0.0, sh_omega = 0.0, sh_delta = 0.0;
    for (int i = 0; i < n_sg_; ++i) {
      const SgParams& sg = p_.sys.sgs[static_cast<size_t>(i)];
      const double w = sg.rated_power * sg.inertia_h_s;
      sh += w;
      sh_omega += w * x(3 * i + 1);
      sh_delta += w * x(3 * i);
    }

    std::vector<double> out;
    for (int i = 0; i < n_sg_; ++i) {
      const double e = e0_[static_cast<size_t>(i)];
      double tie_sg = 0.0, tie_f = 0.0;
      for (int j = 0; j < n_sg_ + n_gfl_; ++j) {
        if (j == i) continue;
        const double term = tie_power_sg_sg(e, x(3 * i), std::abs(emf(j)),
                                            std::arg(emf(j)), y(i, j));
        if (j < n_sg_) {
          tie_sg += term;
        } else {
          tie_f += term;
        }
      }
      out.push_back(x(3 * i));
      out.push_back(1.0 + x(3 * i + 1));
      out.push_back((emf(i) * std::conj(cur(i))).real());
      out.push_back(pm0_[static_cast<size_t>(i)] + x(3 * i + 2));
      out.push_back(local_power_sg(e, y(i, i)));
      out.push_back(tie_sg);
      out.push_back(tie_f);
    }
    out.push_back(1.0 + sh_omega / sh);
    out.push_back(sh_delta / sh);
    for (int k = 0; k < n_gfl_; ++k) {
      const Complex e_int = emf(n_sg_ + k);
      const Complex i_int = cur(n_sg_ + k);
      out.push_back((e_int * std::conj(i_int)).real());
      out.push_back(std::abs(i_int));
      out.push_back(std::arg(e_int));
      out.push_back(std::abs(e_int));
    }
    return out;
  }

  void check_health(const RVec& x) const override {
    for (int i = 0; i < n_sg_; ++i) {
      if (std::abs(x(3 * i + 1)) > 0.5) {
        throw Error("rotor: speed deviation exceeded 0.5 pu (diverging)");
      }
    }
  }

 private:
  void node_solution(double t, const RVec& x, bool post, CVec& emf,
                     CVec& cur) const {
    const bool seg_post = post && prescription_.m_dist >= 0;
    const CVec e_int = prescription_.eval(t, seg_post);
    for (int i = 0; i < n_sg_; ++i) {
      emf(i) = std::polar(e0_[static_cast<size_t>(i)], x(3 * i));
    }
    // Rotor flux cannot jump or drift with the terminal: the reconstructed
    // angle drives the node, the magnitude stays at its initial value.
    for (int k = 0; k < n_gfl_; ++k) {
      emf(n_sg_ + k) =
          std::polar(e_mag0_[static_cast<size_t>(k)], std::arg(e_int(k)));
    }
    cur = (post ? y_post_ : y_pre_) * emf;
  }

  // Reference trajectory sampled per step; the converter node is then
  // re-cast as a fixed-magnitude source behind the (possibly mistuned) filter.
  void build_prescription(const SimConfig& cfg) {
    const long n_steps = std::lround(cfg.duration_s / cfg.dt_s);
    long m_dist = -1;
    if (p_.disturbance) {
      m_dist = std::lround(p_.disturbance->time_s / cfg.dt_s);
      if (m_dist > n_steps) m_dist = -1;
    }
    prescription_.dt = cfg.dt_s;
    prescription_.m_dist = m_dist;

    ReferenceModel ref(p_);
    RVec x = ref.initial_state();
    CVec emf(n_sg_), i_f(n_gfl_), i_g(n_sg_), u_f(n_gfl_);
    auto internal = [&](bool post) {
      ref.interface(x, post, emf, i_f, i_g, u_f);
      CVec e_int(n_gfl_);
      for (int k = 0; k < n_gfl_; ++k) {
        e_int(k) = rotor_internal_emf(u_f(k), i_f(k),
                                      x_eff_[static_cast<size_t>(k)]);
      }
      return e_int;
    };
    for (long step = 0; step <= n_steps; ++step) {
      if (step <= m_dist || m_dist < 0) prescription_.pre.push_back(internal(false));
      if (m_dist >= 0 && step >= m_dist) prescription_.post.push_back(internal(true));
      if (step == n_steps) break;
      rk4_step(ref, static_cast<double>(step) * cfg.dt_s, cfg.dt_s,
               m_dist >= 0 && step >= m_dist, x);
    }
  }

  void build_networks() {
    NetworkCase net = p_.sys.net;
    for (int k = 0; k < n_gfl_; ++k) {
      net.sg_units.push_back(
          SgTap{net.gfl_buses[static_cast<size_t>(k)], x_eff_[static_cast<size_t>(k)]});
    }
    net.gfl_buses.clear();
    y_pre_ = hybrid_interface(kron_reduce(build_partitioned_admittance(net))).y_eq;
    if (p_.disturbance) {
      NetworkCase net_post = net;
      net_post.shunt_loads.push_back(
          ShuntLoad{p_.disturbance->bus, p_.disturbance->delta_admittance});
      y_post_ =
          hybrid_interface(kron_reduce(build_partitioned_admittance(net_post))).y_eq;
    } else {
      y_post_ = y_pre_;
    }
  }

  const PreparedSystem& p_;
  int n_sg_ = 0, n_gfl_ = 0;
  std::vector<double> e0_, delta0_, pm0_, x_eff_, e_mag0_;
  PrescribedEmf prescription_;
  CMat y_pre_, y_post_;
};

std::optional<double> disturbance_time(const PreparedSystem& p) {
  if (p.disturbance) return p.disturbance->time_s;
  return std::nullopt;
}

}  // namespace

Complex rotor_internal_emf(Complex terminal, Complex current, double x_filter) {
  return terminal + Complex(0.0, x_filter) * current;
}

ScenarioResult simulate_multi_generator(const PreparedSystem& prep,
                                        const SimConfig& cfg) {
  MultiGenModel model(prep);
  return drive(model, cfg, disturbance_time(prep), "multigen");
}

ScenarioResult simulate_coi(const PreparedSystem& prep, const SimConfig& cfg,
                            CoiEmfAverage emf_mode) {
  CoiModel model(prep, emf_mode);
  return drive(model, cfg, disturbance_time(prep), "coi");
}

ScenarioResult simulate_nonlinear_reference(const PreparedSystem& prep,
                                            const SimConfig& cfg) {
  ReferenceModel model(prep);
  return drive(model, cfg, disturbance_time(prep), "reference");
}

ScenarioResult simulate_sfr_baseline(const PreparedSystem& prep,
                                     const SimConfig& cfg) {
  SfrModel model(prep);
  return drive(model, cfg, disturbance_time(prep), "sfr");
}

ScenarioResult simulate_rotor_motion_baseline(const PreparedSystem& prep,
                                              const SimConfig& cfg,
                                              double x_filter_error_pct) {
  RotorModel model(prep, cfg, x_filter_error_pct);
  return drive(model, cfg, disturbance_time(prep), "rotor");
}

ScenarioResult simulate_variant(const PreparedSystem& prep, const SimConfig& cfg,
                                const std::string& variant,
                                double x_filter_error_pct) {
  if (variant == "multigen") return simulate_multi_generator(prep, cfg);
  if (variant == "coi" || variant == "proposed") return simulate_coi(prep, cfg);
  if (variant == "reference" || variant == "nonlinear") {
    return simulate_nonlinear_reference(prep, cfg);
  }
  if (variant == "sfr") return simulate_sfr_baseline(prep, cfg);
  if (variant == "rotor") {
    return simulate_rotor_motion_baseline(prep, cfg, x_filter_error_pct);
  }
  throw ValidationError("variant", "unknown variant: " + variant);
}

}  // namespace coidyn
