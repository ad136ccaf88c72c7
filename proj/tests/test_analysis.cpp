#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "coidyn/analysis.hpp"
#include "coidyn/caseio.hpp"
#include "coidyn/errors.hpp"

using namespace coidyn;

namespace {

constexpr double kOmega0 = 2.0 * 3.14159265358979323846 * 60.0;

std::vector<double> grid(double t0, double t1, double dt) {
  std::vector<double> t;
  for (double x = t0; x <= t1 + 1e-12; x += dt) t.push_back(x);
  return t;
}

}  // namespace

TEST_CASE("error index of a constant offset") {
  const std::vector<double> t = grid(0.0, 1.0, 0.01);
  std::vector<double> ref, cmp;
  for (double x : t) {
    ref.push_back(x);
    cmp.push_back(x + 0.02);
  }
  // Peak deviation 1 over a 1 s window: the index is the offset in percent.
  CHECK(error_index(t, ref, t, cmp, 0.0) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(error_index(t, ref, t, cmp, 0.0, true) ==
        doctest::Approx(2.0).epsilon(1e-9));

  for (double& v : cmp) v -= 0.04;
  CHECK(error_index(t, ref, t, cmp, 0.0) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(error_index(t, ref, t, cmp, 0.0, true) ==
        doctest::Approx(-2.0).epsilon(1e-9));

  CHECK(error_index(t, ref, t, ref, 0.0) == 0.0);
}

TEST_CASE("signed area cancels alternating error, absolute area keeps it") {
  const std::vector<double> t = grid(0.0, 1.0, 0.01);
  std::vector<double> ref, cmp;
  for (size_t i = 0; i < t.size(); ++i) {
    ref.push_back(t[i]);
    cmp.push_back(t[i] + (i % 2 == 0 ? 0.01 : -0.01));
  }
  CHECK(error_index(t, ref, t, cmp, 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(error_index(t, ref, t, cmp, 0.0, true)) < 1e-9);
}

TEST_CASE("error index is invariant under exact rescaling") {
  const std::vector<double> t = grid(0.0, 2.0, 0.02);
  std::vector<double> ref, cmp, ref_s, cmp_s;
  for (double x : t) {
    const double r = std::sin(3.0 * x);
    const double c = r + 0.005 * std::cos(7.0 * x);
    ref.push_back(r);
    cmp.push_back(c);
    ref_s.push_back(r * 1024.0);
    cmp_s.push_back(c * 1024.0);
  }
  const double a = error_index(t, ref, t, cmp, 0.2);
  const double b = error_index(t, ref_s, t, cmp_s, 0.2);
  CHECK(a == b);  // power-of-two scaling is exact
}

TEST_CASE("error index interpolates the comparison grid") {
  const std::vector<double> t_ref = grid(0.0, 1.0, 0.01);
  const std::vector<double> t_cmp = grid(-0.005, 1.005, 0.0305);
  std::vector<double> ref, cmp;
  for (double x : t_ref) ref.push_back(2.0 * x);
  for (double x : t_cmp) cmp.push_back(2.0 * x + 0.03);
  // Linear series interpolate exactly, leaving only the offset.
  CHECK(error_index(t_ref, ref, t_cmp, cmp, 0.0) ==
        doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("error index rejects degenerate input") {
  const std::vector<double> t = grid(0.0, 1.0, 0.1);
  const std::vector<double> flat(t.size(), 1.0);
  std::vector<double> ramp;
  for (double x : t) ramp.push_back(x);

  CHECK_THROWS_AS(error_index(t, flat, t, ramp, 0.0), Error);   // no deviation
  CHECK_THROWS_AS(error_index(t, ramp, t, ramp, 5.0), Error);   // start outside
  const std::vector<double> t_short = grid(0.0, 0.5, 0.1);
  std::vector<double> short_cmp;
  for (double x : t_short) short_cmp.push_back(x);
  CHECK_THROWS_AS(error_index(t, ramp, t_short, short_cmp, 0.0), Error);
  CHECK_THROWS_AS(error_index(t, flat, t, ramp, 0.0, true), Error);  // zero dev
}

TEST_CASE("frequency metrics on a ramp") {
  const std::vector<double> t = grid(0.0, 2.0, 0.1);
  std::vector<double> omega;
  for (double x : t) omega.push_back(1.0 - 0.003 * x);

  const FrequencyMetrics m = frequency_metrics(t, omega);
  CHECK(m.max_rocof_pu_per_s == doctest::Approx(-0.003).epsilon(1e-9));
  CHECK(m.nadir_pu == doctest::Approx(1.0 - 0.006).epsilon(1e-12));
  CHECK(m.nadir_time_s == doctest::Approx(2.0).epsilon(1e-12));
  // Final decade of samples: ceil(2.1) = 3 tail points.
  CHECK(m.steady_state_pu ==
        doctest::Approx(1.0 - 0.003 * 1.9).epsilon(1e-12));
}

TEST_CASE("switch-aware rates ignore the discontinuity") {
  // Flat until the switch, a 0.01 pu drop at it, then a steady ramp.
  const double r = 0.5;
  const std::vector<double> t = grid(0.0, 2.0, 0.1);
  std::vector<double> omega;
  for (double x : t) {
    omega.push_back(x <= 1.0 ? 1.0 : 0.99 - r * (x - 1.0));
  }

  const FrequencyMetrics with_switch = frequency_metrics(t, omega, 1.0);
  CHECK(with_switch.max_rocof_pu_per_s == doctest::Approx(-r).epsilon(1e-9));

  // Without the marker the centered difference smears the jump into the rate.
  const FrequencyMetrics plain = frequency_metrics(t, omega);
  CHECK(std::abs(plain.max_rocof_pu_per_s) > r + 0.01);

  CHECK_THROWS_AS(frequency_metrics({0.0, 1.0}, {1.0, 1.0}), Error);
}

TEST_CASE("local equivalents compose the solver chain") {
  const CaseFile cf = load_case("cases/two_bus.json");
  const GflParams& g = cf.system.gfls[0];
  const Complex terminal = std::polar(1.00695, -0.0240209);

  const LocalEquivalents le =
      local_equivalents(g, terminal, 0.25, 0.1, kOmega0);

  GflParams manual = g;
  const GflOperatingPoint op = solve_operating_point(manual, terminal, 0.25, 0.1);
  manual.input_power = op.p0;
  manual.i_q0 = op.i_q0;
  const LinearizationCoeffs c = linearization_coefficients(op);
  const GflTransferFunctions tfs = assemble_transfer_functions(manual, c);
  const GflEquivalent eq = extract_equivalents(tfs, c, kOmega0);

  CHECK(le.eq.h_f == doctest::Approx(eq.h_f).epsilon(1e-14));
  CHECK(le.eq.l_f == doctest::Approx(eq.l_f).epsilon(1e-14));
  CHECK(le.eq.omega_osc_hz == doctest::Approx(eq.omega_osc_hz).epsilon(1e-14));
  CHECK(le.coeffs.c_pi == doctest::Approx(c.c_pi).epsilon(1e-14));

  CHECK(equivalent_quantity(le, "h_f") == le.eq.h_f);
  CHECK(equivalent_quantity(le, "c_ep") == le.coeffs.c_ep);
  CHECK_THROWS_AS(equivalent_quantity(le, "nonsense"), ValidationError);
}

TEST_CASE("sweep over PLL integral gain") {
  const CaseFile cf = load_case("cases/wecc9_gfl.json");

  SweepBase base;
  base.system = cf.system;
  base.disturbance = cf.disturbance;
  base.sim = cf.sim;
  base.sim.duration_s = 4.0;
  base.sim.output_stride = 10;

  SweepSpec spec;
  spec.parameter = "pll.ki";
  spec.values = {70.0, 140.0};
  spec.quantities = {"h_f", "l_f", "nadir_pu"};

  const SweepResult res = run_sweep(spec, base);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0].ok);
  CHECK(res.rows[1].ok);

  // Softer PLL tracking adds equivalent inertia and lifts the nadir.
  CHECK(res.rows[0].results[0] > res.rows[1].results[0]);
  CHECK(res.rows[0].results[2] > res.rows[1].results[2]);
  CHECK(res.monotonicity[0] == "strictly_decreasing");
  CHECK(res.monotonicity[1] == "constant");
  CHECK(res.monotonicity[2] == "strictly_decreasing");
}

TEST_CASE("sweep failure containment and validation") {
  const CaseFile cf = load_case("cases/two_bus.json");
  SweepBase base;
  base.system = cf.system;
  base.sim = cf.sim;

  SweepSpec spec;
  spec.parameter = "dispatch.p";
  spec.values = {0.25, 500.0};
  spec.quantities = {"omega_osc_hz"};

  // The second row asks for power far beyond the line's static limit, so
  // its flow cannot converge; the sweep keeps going.
  const SweepResult res = run_sweep(spec, base);
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0].ok);
  CHECK(!res.rows[1].ok);
  CHECK(!res.rows[1].message.empty());
  CHECK(res.monotonicity[0] == "insufficient");

  SweepSpec bad = spec;
  bad.parameter = "pll.nope";
  CHECK_THROWS_AS(run_sweep(bad, base), ValidationError);

  bad = spec;
  bad.values.clear();
  CHECK_THROWS_AS(run_sweep(bad, base), ValidationError);

  bad = spec;
  bad.quantities = {"no_such_quantity"};
  CHECK_THROWS_AS(run_sweep(bad, base), ValidationError);

  bad = spec;
  bad.gfl_index = 7;
  CHECK_THROWS_AS(run_sweep(bad, base), ValidationError);

  // Simulation metrics need a disturbance to react to.
  bad = spec;
  bad.quantities = {"nadir_pu"};
  CHECK_THROWS_AS(run_sweep(bad, base), ValidationError);
}

TEST_CASE("sensitivity matrix shape and dependence spot checks") {
  const CaseFile cf = load_case("cases/wecc9_gfl.json");
  const GflParams& g = cf.system.gfls[0];
  const SensitivityMatrix m = sensitivity_matrix(
      g, std::polar(1.00092, -0.0904697), 0.2, 0.1997, kOmega0);

  REQUIRE(m.parameter_names.size() == 7);
  REQUIRE(m.quantity_names.size() == 12);
  REQUIRE(m.relative.rows() == 7);
  REQUIRE(m.relative.cols() == 12);

  const auto row = [&](const std::string& p) {
    for (size_t i = 0; i < m.parameter_names.size(); ++i) {
      if (m.parameter_names[i] == p) return static_cast<int>(i);
    }
    return -1;
  };
  const auto col = [&](const std::string& q) {
    for (size_t i = 0; i < m.quantity_names.size(); ++i) {
      if (m.quantity_names[i] == q) return static_cast<int>(i);
    }
    return -1;
  };

  // Active dispatch moves the current phase transform but no inertia.
  CHECK(m.marked(row("p0"), col("c_pi")));
  CHECK(m.blank(row("p0"), col("h_f_id")));
  CHECK(m.blank(row("p0"), col("h_f_pll")));
  // The d-axis inertia is set by the DC side alone.
  CHECK(m.marked(row("ki_dc"), col("h_f_id")));
  CHECK(m.blank(row("kp_pll"), col("h_f_id")));
  CHECK(m.marked(row("kp_pll"), col("h_f_pll")));
  CHECK(m.marked(row("ki_pll"), col("h_f")));

  const auto want = expected_dependence();
  REQUIRE(want.size() == 7);
  REQUIRE(want[0].size() == 12);
}
