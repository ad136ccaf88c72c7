#include <cstdio>
#include <filesystem>
#include <future>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coidyn/analysis.hpp"
#include "coidyn/caseio.hpp"
#include "coidyn/errors.hpp"
#include "coidyn/sim.hpp"

namespace fs = std::filesystem;
using namespace coidyn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

const std::set<std::string> kKnownVariants = {
    "multigen", "coi", "proposed", "reference", "nonlinear", "sfr", "rotor"};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string token;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(token);
      token.clear();
    } else {
      token += ch;
    }
  }
  out.push_back(token);
  return out;
}

SweepSpec parse_sweep_flag(const std::string& text,
                           const std::vector<std::string>& quantities) {
  const size_t eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 >= text.size()) {
    throw ValidationError("--sweep", "expected parameter=v1,v2,... got: " + text);
  }
  SweepSpec spec;
  spec.parameter = text.substr(0, eq);
  for (const std::string& tok : split(text.substr(eq + 1), ',')) {
    try {
      size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      spec.values.push_back(v);
    } catch (const std::exception&) {
      throw ValidationError("--sweep", "bad grid value: " + tok);
    }
  }
  spec.quantities = quantities;
  return spec;
}

std::string sweep_file_tag(const std::string& parameter) {
  std::string tag = parameter;
  for (char& ch : tag) {
    if (ch == '.') ch = '_';
  }
  return tag;
}

void print_row(const char* label, double value, const char* unit) {
  std::printf("  %-16s %14.6g %s\n", label, value, unit);
}

int cmd_validate(const std::string& path) {
  const CaseFile c = load_case(path);
  std::printf("OK %s: buses=%d branches=%zu loads=%zu machines=%zu converters=%zu disturbance=%s\n",
              c.name.c_str(), c.system.net.bus_count, c.system.net.branches.size(),
              c.system.net.shunt_loads.size(), c.system.sgs.size(),
              c.system.gfls.size(), c.disturbance ? "yes" : "no");
  std::printf("effective settings (defaults filled in):\n");
  std::printf("  sim.dt_s=%s sim.duration_s=%s sim.integrator=%s sim.output_stride=%d\n",
              format_double(c.sim.dt_s).c_str(),
              format_double(c.sim.duration_s).c_str(),
              c.sim.integrator == Integrator::kRk4 ? "rk4" : "rk45",
              c.sim.output_stride);
  std::printf("  sim.abs_tol=%s sim.rel_tol=%s\n",
              format_double(c.sim.abs_tol).c_str(),
              format_double(c.sim.rel_tol).c_str());
  std::printf("  system.s_base_mva=%s system.slack_tolerance_pu=%s\n",
              format_double(c.s_base_mva).c_str(),
              format_double(c.slack_tolerance_pu).c_str());
  for (const GflParams& g : c.system.gfls) {
    std::printf("  %s.max_current_pu=%s %s.dc.voltage_setpoint_pu=%s\n",
                g.name.c_str(), format_double(g.max_current).c_str(),
                g.name.c_str(), format_double(g.dc_voltage_setpoint).c_str());
  }
  return kExitOk;
}

int cmd_equivalents(const std::string& path) {
  const CaseFile c = load_case(path);
  if (c.system.gfls.empty()) {
    throw ValidationError("case", "no converters to summarize");
  }
  const PreparedSystem prep = prepare_system(c.system, std::nullopt);
  for (size_t k = 0; k < c.system.gfls.size(); ++k) {
    const GflOperatingPoint& op = prep.flow.gfl_ops[k];
    const LinearizationCoeffs& co = prep.gfl_coeffs[k];
    const GflEquivalent& eq = prep.gfl_equivalents[k];
    std::printf("converter f%zu (%s) at bus %d\n", k + 1,
                c.system.gfls[k].name.c_str(), c.system.gfls[k].bus + 1);
    std::printf(" operating point\n");
    print_row("p0", op.p0, "pu");
    print_row("q0", op.q0, "pu");
    print_row("u_f0", op.u_f0, "pu");
    print_row("theta_u0", op.theta_u0, "rad");
    print_row("i_d0", op.i_d0, "pu");
    print_row("i_q0", op.i_q0, "pu");
    std::printf(" detector and transform coefficients\n");
    print_row("c_pll", co.c_pll, "pu");
    print_row("c_pi", co.c_pi, "rad/pu");
    print_row("c_ei", co.c_ei, "pu/pu");
    print_row("c_ep", co.c_ep, "pu/rad");
    std::printf(" swing equivalents\n");
    print_row("h_f_id", eq.h_f_id, "s");
    print_row("l_f_id", eq.l_f_id, "pu/pu");
    print_row("h_f_pll", eq.h_f_pll, "s");
    print_row("l_f_pll", eq.l_f_pll, "pu/pu");
    print_row("h_f", eq.h_f, "s");
    print_row("l_f", eq.l_f, "pu/pu");
    std::printf(" governor-branch coefficients\n");
    print_row("a2", eq.a2, "-");
    print_row("a1", eq.a1, "-");
    print_row("b1", eq.b1, "-");
    print_row("b0", eq.b0, "-");
    print_row("omega_osc", eq.omega_osc_hz, "Hz");
    print_row("damped_freq", eq.damped_freq_hz, "Hz");
  }
  std::printf("network (single aggregate node view)\n");
  const CoiInterfaceMatrix& ci = prep.coi_pre;
  std::printf("  y_eq            %14.6g %+.6g j pu\n", ci.y_eq.real(), ci.y_eq.imag());
  for (int k = 0; k < ci.t_i.size(); ++k) {
    std::printf("  t_i[f%d]         %14.6g %+.6g j\n", k + 1, ci.t_i(k).real(),
                ci.t_i(k).imag());
  }
  for (int k = 0; k < ci.z.rows(); ++k) {
    std::printf("  z[f%d,f%d]        %14.6g %+.6g j pu\n", k + 1, k + 1,
                ci.z(k, k).real(), ci.z(k, k).imag());
  }
  return kExitOk;
}

void append_frequency_metrics(
    std::vector<std::pair<std::string, std::string>>& kv,
    const std::string& prefix, const ScenarioResult& res) {
  const FrequencyMetrics fm = frequency_metrics(
      res.time_s, res.series("omega_coi_pu"),
      res.disturbed ? std::optional<double>(res.disturbance_time_s)
                    : std::nullopt);
  kv.emplace_back(prefix + ".max_rocof_pu_per_s",
                  format_double(fm.max_rocof_pu_per_s));
  kv.emplace_back(prefix + ".max_rocof_time_s", format_double(fm.max_rocof_time_s));
  kv.emplace_back(prefix + ".nadir_pu", format_double(fm.nadir_pu));
  kv.emplace_back(prefix + ".nadir_time_s", format_double(fm.nadir_time_s));
  kv.emplace_back(prefix + ".steady_state_pu", format_double(fm.steady_state_pu));
}

int run_manifest(const RunManifest& m, bool sweeps_only) {
  const CaseFile c = load_case(m.case_path);
  const SimConfig cfg = effective_sim_config(c, m);
  for (const std::string& v : m.variants) {
    if (!kKnownVariants.count(v)) {
      throw ValidationError("variants", "unknown variant: " + v);
    }
  }
  if (sweeps_only && m.sweeps.empty()) {
    throw ValidationError("manifest", "sweep verb needs at least one sweep spec");
  }

  fs::create_directories(m.output_dir);
  const fs::path out_dir(m.output_dir);
  const fs::path failed_marker = out_dir / "FAILED";
  std::error_code ec;
  fs::remove(failed_marker, ec);

  try {
    const PreparedSystem prep = prepare_system(c.system, c.disturbance);

    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("case", c.name);

    for (size_t k = 0; k < c.system.gfls.size(); ++k) {
      const std::string pre = "equivalents.f" + std::to_string(k + 1);
      const GflEquivalent& eq = prep.gfl_equivalents[k];
      const LinearizationCoeffs& co = prep.gfl_coeffs[k];
      kv.emplace_back(pre + ".h_f_s", format_double(eq.h_f));
      kv.emplace_back(pre + ".l_f", format_double(eq.l_f));
      kv.emplace_back(pre + ".h_f_id_s", format_double(eq.h_f_id));
      kv.emplace_back(pre + ".l_f_id", format_double(eq.l_f_id));
      kv.emplace_back(pre + ".h_f_pll_s", format_double(eq.h_f_pll));
      kv.emplace_back(pre + ".l_f_pll", format_double(eq.l_f_pll));
      kv.emplace_back(pre + ".a2", format_double(eq.a2));
      kv.emplace_back(pre + ".a1", format_double(eq.a1));
      kv.emplace_back(pre + ".b1", format_double(eq.b1));
      kv.emplace_back(pre + ".b0", format_double(eq.b0));
      kv.emplace_back(pre + ".omega_osc_hz", format_double(eq.omega_osc_hz));
      kv.emplace_back(pre + ".damped_freq_hz", format_double(eq.damped_freq_hz));
      kv.emplace_back(pre + ".c_pi", format_double(co.c_pi));
      kv.emplace_back(pre + ".c_pll", format_double(co.c_pll));
      kv.emplace_back(pre + ".c_ei", format_double(co.c_ei));
      kv.emplace_back(pre + ".c_ep", format_double(co.c_ep));
    }

    std::vector<ScenarioResult> results;
    if (!sweeps_only) {
      // Scenario workers run concurrently; each writes only its own CSV.
      std::vector<std::string> variants;
      for (const std::string& v : m.variants) {
        if (std::find(variants.begin(), variants.end(), v) == variants.end()) {
          variants.push_back(v);
        }
      }
      std::vector<std::future<ScenarioResult>> futures;
      for (const std::string& v : variants) {
        futures.push_back(std::async(std::launch::async, [&, v] {
          ScenarioResult res = simulate_variant(prep, cfg, v, m.x_filter_error_pct);
          const fs::path csv = out_dir / (c.name + "_" + v + ".csv");
          write_text_file(csv.string(), csv_text(res));
          return res;
        }));
      }
      for (auto& f : futures) results.push_back(f.get());

      for (size_t i = 0; i < variants.size(); ++i) {
        append_frequency_metrics(kv, "variant." + variants[i], results[i]);
        std::fprintf(stderr, "%s: %zu samples, %ld steps, %.3f s\n",
                     variants[i].c_str(), results[i].samples.size(),
                     results[i].steps, results[i].runtime_s);
      }

      if (m.compare) {
        if (!c.disturbance) {
          throw ValidationError("compare",
                                "error indices need a disturbance window");
        }
        const ScenarioResult* ref = nullptr;
        for (size_t i = 0; i < variants.size(); ++i) {
          if (variants[i] == "reference" || variants[i] == "nonlinear") {
            ref = &results[i];
          }
        }
        if (ref == nullptr) {
          throw ValidationError(
              "compare", "requires the reference variant in the variant list");
        }
        const double t0 = c.disturbance->time_s;
        for (size_t i = 0; i < variants.size(); ++i) {
          const ScenarioResult& res = results[i];
          if (&res == ref) continue;
          std::vector<std::string> signals{"omega_coi_pu"};
          for (size_t k = 0; k < c.system.gfls.size(); ++k) {
            signals.push_back("p_f" + std::to_string(k + 1) + "_ele_pu");
          }
          for (const std::string& sig : signals) {
            if (res.column(sig) < 0 || ref->column(sig) < 0) continue;
            const double err =
                error_index(*ref, res, sig, t0, m.signed_error_index);
            kv.emplace_back("compare." + variants[i] + "_vs_reference." + sig +
                                ".error_pct",
                            format_double(err));
          }
        }
      }
    }

    for (const SweepSpec& spec : m.sweeps) {
      SweepBase base{c.system, c.disturbance, cfg};
      const SweepResult sr = run_sweep(spec, base);
      const fs::path csv =
          out_dir / (c.name + "_sweep_" + sweep_file_tag(spec.parameter) + ".csv");
      write_text_file(csv.string(), sweep_csv_text(sr));
      for (size_t qi = 0; qi < spec.quantities.size(); ++qi) {
        kv.emplace_back("sweep." + spec.parameter + "." + spec.quantities[qi] +
                            ".monotonicity",
                        sr.monotonicity[qi]);
      }
    }

    const fs::path metrics = out_dir / (c.name + "_metrics.txt");
    write_text_file(metrics.string(), metrics_text(kv));
    std::printf("wrote %s\n", metrics.string().c_str());
    return kExitOk;
  } catch (const std::exception& e) {
    write_text_file(failed_marker.string(), std::string(e.what()) + "\n");
    throw;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frequency dynamics for mixed synchronous/converter grids"};
  app.require_subcommand(1);

  std::string case_path;
  auto* validate = app.add_subcommand("validate", "parse and check a case file");
  validate->add_option("case", case_path, "case JSON path")->required();

  std::string eq_case_path;
  auto* equivalents =
      app.add_subcommand("equivalents", "print converter swing equivalents");
  equivalents->add_option("case", eq_case_path, "case JSON path")->required();

  std::string manifest_path;
  double opt_dt = 0.0, opt_duration = 0.0, opt_xerr = 0.0;
  unsigned long opt_seed = 0;
  std::string opt_variants, opt_out, opt_quantities = "h_f,l_f,omega_osc_hz,c_pi";
  std::vector<std::string> opt_sweeps;
  bool opt_signed = false, opt_compare = false;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("manifest", manifest_path, "manifest JSON path")->required();
    cmd->add_option("--dt", opt_dt, "integration step override, s");
    cmd->add_option("--duration", opt_duration, "horizon override, s");
    cmd->add_option("--variants", opt_variants, "comma-separated variant list");
    cmd->add_option("--out", opt_out, "output directory override");
    cmd->add_option("--seed", opt_seed, "reserved");
    cmd->add_flag("--signed-error-index", opt_signed,
                  "signed (cancellation-visible) error integrals");
    cmd->add_flag("--compare", opt_compare,
                  "emit pairwise error indices vs the reference variant");
    cmd->add_option("--x-filter-error", opt_xerr,
                    "rotor baseline filter reactance error, percent");
    cmd->add_option("--sweep", opt_sweeps,
                    "extra sweep as parameter=v1,v2,... (repeatable)");
    cmd->add_option("--sweep-quantities", opt_quantities,
                    "quantities recorded by --sweep specs");
  };
  auto* run = app.add_subcommand("run", "simulate variants from a manifest");
  add_run_flags(run);
  auto* sweep = app.add_subcommand("sweep", "run only the manifest sweeps");
  add_run_flags(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (validate->parsed()) return cmd_validate(case_path);
    if (equivalents->parsed()) return cmd_equivalents(eq_case_path);

    RunManifest m = load_manifest(manifest_path);
    if (opt_dt > 0.0) m.dt_s = opt_dt;
    if (opt_duration > 0.0) m.duration_s = opt_duration;
    if (!opt_variants.empty()) {
      m.variants = split(opt_variants, ',');
    }
    if (!opt_out.empty()) m.output_dir = opt_out;
    if (opt_seed != 0) m.seed = opt_seed;
    if (opt_signed) m.signed_error_index = true;
    if (opt_compare) m.compare = true;
    if (opt_xerr != 0.0) m.x_filter_error_pct = opt_xerr;
    if (!opt_sweeps.empty()) {
      const std::vector<std::string> quantities = split(opt_quantities, ',');
      for (const std::string& s : opt_sweeps) {
        m.sweeps.push_back(parse_sweep_flag(s, quantities));
      }
    }
    return run_manifest(m, sweep->parsed());
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}
