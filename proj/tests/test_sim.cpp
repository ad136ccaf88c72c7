#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "coidyn/analysis.hpp"
#include "coidyn/caseio.hpp"
#include "coidyn/errors.hpp"
#include "coidyn/network.hpp"
#include "coidyn/sim.hpp"

using namespace coidyn;

namespace {

CaseFile two_bus() { return load_case("cases/two_bus.json"); }
CaseFile wecc9() { return load_case("cases/wecc9_gfl.json"); }

double column_max_dev(const ScenarioResult& r, const std::string& name,
                      double center) {
  double worst = 0.0;
  for (double v : r.series(name)) worst = std::max(worst, std::abs(v - center));
  return worst;
}

}  // namespace

TEST_CASE("power flow satisfies the assembled network equations") {
  const CaseFile cf = two_bus();
  const PowerFlowResult flow = solve_power_flow(cf.system);

  // Slack terminal pinned at its setpoint with zero angle.
  CHECK(std::abs(flow.v_bus(0) - Complex(1.02, 0.0)) < 1e-9);

  // Node balance: assembled matrix times [bus voltages; EMFs] returns the
  // injections, zero at passive buses and the converter current at its bus.
  const CMat y = assemble_admittance(cf.system.net);
  CVec volt(3);
  volt(0) = flow.v_bus(0);
  volt(1) = flow.v_bus(1);
  volt(2) = flow.sg_emf[0];
  const CVec inj = y * volt;

  const Complex i_gfl = flow.gfl_ops[0].current;
  CHECK(std::abs(inj(1) - i_gfl) < 1e-9);

  // Machine current enters the network at its EMF node and arrives at the
  // terminal bus unchanged through the series reactance.
  CHECK(std::abs((flow.sg_emf[0] * std::conj(inj(2))).real() -
                 flow.sg_pe0[0]) < 1e-9);
  CHECK(std::abs(inj(2) - flow.i_injection(0)) < 1e-9);

  // Converter dispatch honored to the flow tolerance at its solved terminal.
  const GflOperatingPoint& op = flow.gfl_ops[0];
  CHECK(op.p0 == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(op.q0 == doctest::Approx(0.1).epsilon(1e-9));
  const Complex s = flow.v_bus(1) * std::conj(op.current);
  CHECK(s.real() == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(s.imag() == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("power flow holds PV setpoints on the nine-bus case") {
  const CaseFile cf = wecc9();
  const PowerFlowResult flow = solve_power_flow(cf.system);
  CHECK(std::abs(flow.v_bus(0)) == doctest::Approx(1.04).epsilon(1e-8));
  CHECK(std::abs(flow.v_bus(1)) == doctest::Approx(1.025).epsilon(1e-8));
  CHECK(std::abs(std::arg(flow.v_bus(0))) < 1e-12);
  // Non-slack dispatch recovered at the machine terminal.
  CHECK(flow.sg_pe0[1] == doctest::Approx(1.63).epsilon(1e-6));
  CHECK(flow.iterations > 0);
}

TEST_CASE("prepared nine-bus system reproduces pinned equivalents") {
  const CaseFile cf = wecc9();
  const PreparedSystem prep = prepare_system(cf.system, cf.disturbance);

  const GflOperatingPoint& op = prep.flow.gfl_ops[0];
  CHECK(op.u_f0 == doctest::Approx(1.00092).epsilon(1e-4));
  CHECK(op.theta_u0 == doctest::Approx(-0.0904697).epsilon(1e-4));
  CHECK(op.i_d0 == doctest::Approx(-0.199816).epsilon(1e-4));

  const LinearizationCoeffs& c = prep.gfl_coeffs[0];
  CHECK(c.c_pi == doctest::Approx(-2.5023).epsilon(1e-4));
  CHECK(c.c_ep == doctest::Approx(-0.1997).epsilon(1e-9));

  const GflEquivalent& eq = prep.gfl_equivalents[0];
  CHECK(eq.h_f_id == doctest::Approx(-3.35913).epsilon(1e-4));
  CHECK(eq.h_f_pll == doctest::Approx(0.245034).epsilon(1e-4));
  CHECK(eq.h_f == doctest::Approx(0.207212).epsilon(1e-4));
  CHECK(eq.l_f == doctest::Approx(-0.0946691).epsilon(1e-4));
  CHECK(eq.b1 == doctest::Approx(4.24504).epsilon(1e-4));
  CHECK(eq.b0 == doctest::Approx(51.2332).epsilon(1e-4));
  CHECK(eq.omega_osc_hz == doctest::Approx(1.12733).epsilon(1e-4));
  CHECK(eq.damped_freq_hz == doctest::Approx(1.08795).epsilon(1e-4));

  // Collapsed-network interface rows.
  CHECK(std::abs(prep.coi_pre.y_eq - Complex(2.73717, -0.954292)) < 1e-4);
  CHECK(std::abs(prep.coi_pre.t_i(0) - Complex(-0.862655, 0.251566)) < 1e-4);
  CHECK(std::abs(prep.coi_pre.z(0, 0) - Complex(0.0410385, 0.215292)) < 1e-4);
  CHECK(std::abs(prep.hyb_pre.t_u(0, 0) - Complex(0.457600, -0.127741)) < 1e-4);
  CHECK(std::abs(prep.hyb_pre.t_u(0, 1) - Complex(0.405055, -0.123825)) < 1e-4);
}

TEST_CASE("every variant holds the undisturbed equilibrium") {
  const CaseFile cf = two_bus();
  const PreparedSystem prep = prepare_system(cf.system, {});
  SimConfig cfg = cf.sim;
  cfg.duration_s = 2.0;
  cfg.output_stride = 10;

  for (const std::string variant :
       {"multigen", "coi", "reference", "sfr", "rotor"}) {
    const ScenarioResult r = simulate_variant(prep, cfg, variant, 20.0);
    CHECK(!r.disturbed);
    for (const std::string& name : r.signal_names) {
      if (name.find("omega") == std::string::npos) continue;
      if (name.find("dev") != std::string::npos) {
        CHECK(column_max_dev(r, name, 0.0) < 1e-8);
      } else {
        CHECK(column_max_dev(r, name, 1.0) < 1e-8);
      }
    }
  }
}

TEST_CASE("power bookkeeping closes on every sampled row") {
  const CaseFile cf = wecc9();
  const PreparedSystem prep = prepare_system(cf.system, cf.disturbance);
  SimConfig cfg = cf.sim;
  cfg.duration_s = 3.0;
  cfg.output_stride = 50;

  const ScenarioResult mg = simulate_multi_generator(prep, cfg);
  const auto check_rows = [&](const ScenarioResult& r,
                              const std::string& total,
                              const std::vector<std::string>& parts) {
    const std::vector<double> sum_of = r.series(total);
    std::vector<std::vector<double>> part_series;
    for (const auto& p : parts) part_series.push_back(r.series(p));
    for (size_t i = 0; i < sum_of.size(); ++i) {
      double s = 0.0;
      for (const auto& ps : part_series) s += ps[i];
      CHECK(std::abs(sum_of[i] - s) < 1e-10);
    }
  };

  for (const std::string g : {"g1", "g2"}) {
    check_rows(mg, "p_" + g + "_ele_pu",
               {"p_" + g + "_loc_pu", "p_" + g + "_tie_sg_pu",
                "p_" + g + "_tie_f_pu"});
  }
  check_rows(mg, "p_f1_ele_pu",
             {"p_f1_loc_pu", "p_f1_tie_g_pu", "p_f1_tie_f_pu"});

  const ScenarioResult coi = simulate_coi(prep, cfg);
  check_rows(coi, "p_coi_ele_pu", {"p_coi_loc_pu", "p_coi_tie_f_pu"});
  check_rows(coi, "p_f1_ele_pu",
             {"p_f1_loc_pu", "p_f1_tie_g_pu", "p_f1_tie_f_pu"});
}

TEST_CASE("disturbance snapshots obey the jump contract") {
  const CaseFile cf = wecc9();
  const PreparedSystem prep = prepare_system(cf.system, cf.disturbance);
  SimConfig cfg = cf.sim;
  cfg.duration_s = 1.5;

  const ScenarioResult r = simulate_coi(prep, cfg);
  REQUIRE(r.disturbed);
  REQUIRE(!r.snapshot_pre.empty());

  const int i_omega_f = r.column("omega_f1_pu");
  const int i_p_f = r.column("p_f1_ele_pu");
  const int i_omega_coi = r.column("omega_coi_pu");
  const int i_theta = r.column("theta_f1_i_rad");

  const double d_omega = r.snapshot_post[i_omega_f] - r.snapshot_pre[i_omega_f];
  const double d_p = r.snapshot_post[i_p_f] - r.snapshot_pre[i_p_f];
  const double l_f = prep.gfl_equivalents[0].l_f;

  // The feedthrough path: the frequency estimate jumps with the power step.
  CHECK(std::abs(d_p) > 1e-4);
  CHECK(std::abs(d_omega - l_f * d_p) < 1e-8);

  // States cannot jump: the averaged speed and the interface angle hold.
  CHECK(std::abs(r.snapshot_post[i_omega_coi] - r.snapshot_pre[i_omega_coi]) <
        1e-12);
  CHECK(std::abs(r.snapshot_post[i_theta] - r.snapshot_pre[i_theta]) < 1e-12);

  // The playback baseline reconstructs its angle from the terminal, so its
  // internal angle is discontinuous across the step.
  const ScenarioResult rot = simulate_rotor_motion_baseline(prep, cfg, 20.0);
  const int i_dint = rot.column("delta_int_f1_rad");
  CHECK(std::abs(rot.snapshot_post[i_dint] - rot.snapshot_pre[i_dint]) > 1e-7);
}

TEST_CASE("frozen-current baseline reports the scheduled converter power") {
  const CaseFile cf = wecc9();
  const PreparedSystem prep = prepare_system(cf.system, cf.disturbance);
  SimConfig cfg = cf.sim;
  cfg.duration_s = 3.0;
  cfg.output_stride = 20;

  const ScenarioResult r = simulate_sfr_baseline(prep, cfg);
  const double p0 = prep.flow.gfl_ops[0].p0;
  CHECK(column_max_dev(r, "p_f1_ele_pu", p0) < 1e-12);

  // The network-side power of the frozen phasor does move with the voltage.
  CHECK(column_max_dev(r, "p_f1_net_pu", p0) > 1e-4);
}

TEST_CASE("repeated runs are bit identical") {
  const CaseFile cf = wecc9();
  SimConfig cfg = cf.sim;
  cfg.duration_s = 2.0;
  cfg.output_stride = 10;

  const PreparedSystem prep1 = prepare_system(cf.system, cf.disturbance);
  const PreparedSystem prep2 = prepare_system(cf.system, cf.disturbance);
  const std::string a = csv_text(simulate_coi(prep1, cfg));
  const std::string b = csv_text(simulate_coi(prep2, cfg));
  CHECK(a == b);

  const std::string c = csv_text(simulate_nonlinear_reference(prep1, cfg));
  const std::string d = csv_text(simulate_nonlinear_reference(prep2, cfg));
  CHECK(c == d);
}

TEST_CASE("fixed-step and adaptive integration agree") {
  const CaseFile cf = wecc9();
  const PreparedSystem prep = prepare_system(cf.system, cf.disturbance);

  SimConfig rk4 = cf.sim;
  rk4.duration_s = 2.0;
  SimConfig rk45 = rk4;
  rk45.integrator = Integrator::kRk45;

  const ScenarioResult a = simulate_coi(prep, rk4);
  const ScenarioResult b = simulate_coi(prep, rk45);
  const std::vector<double> wa = a.series("omega_coi_pu");
  const std::vector<double> wb = b.series("omega_coi_pu");
  REQUIRE(wa.size() == wb.size());
  double worst = 0.0;
  for (size_t i = 0; i < wa.size(); ++i) {
    worst = std::max(worst, std::abs(wa[i] - wb[i]));
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("variant dispatch accepts aliases and rejects unknowns") {
  const CaseFile cf = two_bus();
  const PreparedSystem prep = prepare_system(cf.system, {});
  SimConfig cfg = cf.sim;
  cfg.duration_s = 0.2;

  CHECK(simulate_variant(prep, cfg, "proposed").variant ==
        simulate_variant(prep, cfg, "coi").variant);
  CHECK(simulate_variant(prep, cfg, "nonlinear").variant ==
        simulate_variant(prep, cfg, "reference").variant);
  CHECK_THROWS_AS(simulate_variant(prep, cfg, "hybrid"), ValidationError);
}

TEST_CASE("configuration and disturbance validation") {
  const CaseFile cf = wecc9();

  // Generator terminals cannot take the admittance step.
  Disturbance bad = *cf.disturbance;
  bad.bus = cf.system.sgs[0].bus;
  CHECK_THROWS_AS(prepare_system(cf.system, bad), ValidationError);
  bad.bus = cf.system.gfls[0].bus;
  CHECK_THROWS_AS(prepare_system(cf.system, bad), ValidationError);
  bad.bus = 99;
  CHECK_THROWS_AS(prepare_system(cf.system, bad), ValidationError);

  const PreparedSystem prep = prepare_system(cf.system, cf.disturbance);
  SimConfig cfg = cf.sim;
  cfg.dt_s = 0.0;
  CHECK_THROWS_AS(simulate_coi(prep, cfg), ValidationError);

  cfg = cf.sim;
  cfg.duration_s = cfg.dt_s / 2.0;
  CHECK_THROWS_AS(simulate_coi(prep, cfg), ValidationError);

  cfg = cf.sim;
  cfg.output_stride = 0;
  CHECK_THROWS_AS(simulate_coi(prep, cfg), ValidationError);

  // A disturbance on the first step leaves no pre-event sample.
  Disturbance early = *cf.disturbance;
  early.time_s = 0.0;
  const PreparedSystem prep_early = prepare_system(cf.system, early);
  CHECK_THROWS_AS(simulate_coi(prep_early, cf.sim), ValidationError);
}

TEST_CASE("internal EMF reconstruction") {
  const Complex terminal(1.01, -0.05);
  const Complex current(0.3, 0.12);
  CHECK(std::abs(rotor_internal_emf(terminal, current, 0.0) - terminal) == 0.0);
  const Complex e = rotor_internal_emf(terminal, current, 0.08);
  CHECK(std::abs(e - (terminal + Complex(0.0, 0.08) * current)) < 1e-15);
}

TEST_CASE("converter power rings at the predicted frequency") {
  // Step at an electrically distant bus, then read the dominant tone of
  // the converter power out of the reference trajectory.
  CaseFile cf = wecc9();
  Disturbance dist = *cf.disturbance;
  dist.bus = 8;
  const PreparedSystem prep = prepare_system(cf.system, dist);

  SimConfig cfg = cf.sim;
  cfg.duration_s = 10.0;
  cfg.output_stride = 5;

  const ScenarioResult r = simulate_nonlinear_reference(prep, cfg);
  const std::vector<double> p = r.series("p_f1_ele_pu");
  const std::vector<double>& t = r.time_s;

  size_t start = 0;
  while (start < t.size() && t[start] < dist.time_s + 0.2) ++start;
  const size_t n = t.size() - start;
  double mean = 0.0;
  for (size_t i = start; i < t.size(); ++i) mean += p[i];
  mean /= static_cast<double>(n);

  double best_f = 0.0, best_mag = -1.0;
  for (double f = 0.4; f <= 2.5; f += 0.01) {
    Complex acc(0.0, 0.0);
    for (size_t i = start; i < t.size(); ++i) {
      acc += (p[i] - mean) *
             std::polar(1.0, -2.0 * 3.14159265358979323846 * f * t[i]);
    }
    if (std::abs(acc) > best_mag) {
      best_mag = std::abs(acc);
      best_f = f;
    }
  }

  const double predicted = prep.gfl_equivalents[0].omega_osc_hz;
  CHECK(predicted == doctest::Approx(1.127).epsilon(1e-2));
  CHECK(std::abs(best_f - predicted) < 0.15);
}
