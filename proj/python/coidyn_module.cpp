// Python bindings over the case IO, equivalents, simulation, and sweep
// entry points. Results come back as plain dicts with numpy arrays so
// callers need nothing beyond numpy.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "coidyn/analysis.hpp"
#include "coidyn/caseio.hpp"
#include "coidyn/errors.hpp"
#include "coidyn/sim.hpp"

namespace py = pybind11;
using namespace coidyn;

namespace {

SimConfig apply_overrides(const CaseFile& cf, std::optional<double> dt,
                          std::optional<double> duration,
                          std::optional<std::string> integrator,
                          std::optional<int> stride) {
  SimConfig cfg = cf.sim;
  if (dt) cfg.dt_s = *dt;
  if (duration) cfg.duration_s = *duration;
  if (integrator) {
    if (*integrator == "rk4") {
      cfg.integrator = Integrator::kRk4;
    } else if (*integrator == "rk45") {
      cfg.integrator = Integrator::kRk45;
    } else {
      throw ValidationError("sim.integrator",
                            "unknown integrator: " + *integrator);
    }
  }
  if (stride) cfg.output_stride = *stride;
  return cfg;
}

py::array_t<double> vector_array(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict result_dict(const ScenarioResult& r) {
  const py::ssize_t n = static_cast<py::ssize_t>(r.time_s.size());
  const py::ssize_t m = static_cast<py::ssize_t>(r.signal_names.size());
  py::array_t<double> samples({n, m});
  double* dst = samples.mutable_data();
  for (py::ssize_t i = 0; i < n; ++i) {
    const std::vector<double>& row = r.samples[static_cast<size_t>(i)];
    std::copy(row.begin(), row.end(), dst + i * m);
  }

  py::dict d;
  d["variant"] = r.variant;
  d["signal_names"] = r.signal_names;
  d["time_s"] = vector_array(r.time_s);
  d["samples"] = samples;
  d["disturbed"] = r.disturbed;
  if (r.disturbed) {
    d["disturbance_time_s"] = r.disturbance_time_s;
    d["snapshot_pre"] = vector_array(r.snapshot_pre);
    d["snapshot_post"] = vector_array(r.snapshot_post);
  }
  d["steps"] = r.steps;
  return d;
}

py::dict equivalent_dict(const GflParams& g, const GflOperatingPoint& op,
                         const LinearizationCoeffs& c, const GflEquivalent& eq) {
  py::dict d;
  d["name"] = g.name;
  d["bus"] = g.bus + 1;  // file numbering
  d["p0"] = op.p0;
  d["q0"] = op.q0;
  d["u_f0"] = op.u_f0;
  d["c_pll"] = c.c_pll;
  d["c_pi"] = c.c_pi;
  d["c_ei"] = c.c_ei;
  d["c_ep"] = c.c_ep;
  d["h_f_id_s"] = eq.h_f_id;
  d["l_f_id"] = eq.l_f_id;
  d["h_f_pll_s"] = eq.h_f_pll;
  d["l_f_pll"] = eq.l_f_pll;
  d["h_f_s"] = eq.h_f;
  d["l_f"] = eq.l_f;
  d["a2"] = eq.a2;
  d["a1"] = eq.a1;
  d["b1"] = eq.b1;
  d["b0"] = eq.b0;
  d["omega_osc_hz"] = eq.omega_osc_hz;
  d["damped_freq_hz"] = eq.damped_freq_hz;
  return d;
}

}  // namespace

PYBIND11_MODULE(_coidyn, m) {
  m.doc() = "frequency dynamics for mixed synchronous/converter grids";

  py::register_exception<ValidationError>(m, "CaseValidationError",
                                          PyExc_ValueError);

  m.def(
      "validate",
      [](const std::string& path) {
        const CaseFile cf = load_case(path);
        prepare_system(cf.system, cf.disturbance);
        py::dict d;
        d["name"] = cf.name;
        d["bus_count"] = cf.system.net.bus_count;
        d["branch_count"] = cf.system.net.branches.size();
        d["load_count"] = cf.system.net.shunt_loads.size();
        d["machine_count"] = cf.system.sgs.size();
        d["converter_count"] = cf.system.gfls.size();
        d["has_disturbance"] = cf.disturbance.has_value();
        return d;
      },
      py::arg("path"),
      "Parse a case file, solve its flow, and return a summary dict.");

  m.def(
      "equivalents",
      [](const std::string& path) {
        const CaseFile cf = load_case(path);
        const PreparedSystem prep = prepare_system(cf.system, cf.disturbance);
        py::list out;
        for (size_t k = 0; k < prep.sys.gfls.size(); ++k) {
          out.append(equivalent_dict(prep.sys.gfls[k], prep.flow.gfl_ops[k],
                                     prep.gfl_coeffs[k],
                                     prep.gfl_equivalents[k]));
        }
        return out;
      },
      py::arg("path"),
      "Swing equivalents of every converter at the solved operating point.");

  m.def(
      "simulate",
      [](const std::string& path, const std::string& variant,
         std::optional<double> dt, std::optional<double> duration,
         std::optional<std::string> integrator, std::optional<int> stride,
         double x_filter_error_pct) {
        const CaseFile cf = load_case(path);
        const SimConfig cfg =
            apply_overrides(cf, dt, duration, integrator, stride);
        const PreparedSystem prep = prepare_system(cf.system, cf.disturbance);
        const ScenarioResult r =
            simulate_variant(prep, cfg, variant, x_filter_error_pct);
        py::dict d = result_dict(r);
        if (r.disturbed) {
          const FrequencyMetrics fm =
              frequency_metrics(r.time_s, r.series("omega_coi_pu"),
                                r.disturbance_time_s);
          py::dict md;
          md["max_rocof_pu_per_s"] = fm.max_rocof_pu_per_s;
          md["max_rocof_time_s"] = fm.max_rocof_time_s;
          md["nadir_pu"] = fm.nadir_pu;
          md["nadir_time_s"] = fm.nadir_time_s;
          md["steady_state_pu"] = fm.steady_state_pu;
          d["frequency_metrics"] = md;
        }
        return d;
      },
      py::arg("path"), py::arg("variant") = "coi", py::kw_only(),
      py::arg("dt") = std::nullopt, py::arg("duration") = std::nullopt,
      py::arg("integrator") = std::nullopt, py::arg("stride") = std::nullopt,
      py::arg("x_filter_error_pct") = 0.0,
      "Simulate one variant (multigen, coi, reference, sfr, rotor) and "
      "return the sampled trajectories.");

  m.def(
      "error_index",
      [](const std::string& path, const std::string& variant,
         const std::string& signal, const std::string& reference,
         bool signed_area, std::optional<double> dt,
         std::optional<double> duration, std::optional<int> stride,
         double x_filter_error_pct) {
        const CaseFile cf = load_case(path);
        if (!cf.disturbance) {
          throw ValidationError("disturbance",
                                "error index needs a disturbed case");
        }
        const SimConfig cfg =
            apply_overrides(cf, dt, duration, std::nullopt, stride);
        const PreparedSystem prep = prepare_system(cf.system, cf.disturbance);
        const ScenarioResult ref =
            simulate_variant(prep, cfg, reference, x_filter_error_pct);
        const ScenarioResult cmp =
            simulate_variant(prep, cfg, variant, x_filter_error_pct);
        return error_index(ref, cmp, signal, cf.disturbance->time_s,
                           signed_area);
      },
      py::arg("path"), py::arg("variant"), py::arg("signal"), py::kw_only(),
      py::arg("reference") = "reference", py::arg("signed_area") = false,
      py::arg("dt") = std::nullopt, py::arg("duration") = std::nullopt,
      py::arg("stride") = std::nullopt, py::arg("x_filter_error_pct") = 0.0,
      "Normalized integral error (percent) of a variant against the "
      "reference over the post-disturbance window.");

  m.def(
      "sweep",
      [](const std::string& path, const std::string& parameter,
         const std::vector<double>& values,
         const std::vector<std::string>& quantities, int gfl_index) {
        const CaseFile cf = load_case(path);
        SweepBase base;
        base.system = cf.system;
        base.disturbance = cf.disturbance;
        base.sim = cf.sim;
        SweepSpec spec;
        spec.parameter = parameter;
        spec.values = values;
        spec.quantities = quantities;
        spec.gfl_index = gfl_index;
        const SweepResult res = run_sweep(spec, base);
        py::list rows;
        for (const SweepRow& r : res.rows) {
          py::dict rd;
          rd["value"] = r.value;
          rd["ok"] = r.ok;
          rd["message"] = r.message;
          rd["results"] = vector_array(r.results);
          rows.append(rd);
        }
        py::dict d;
        d["parameter"] = parameter;
        d["quantities"] = quantities;
        d["rows"] = rows;
        d["monotonicity"] = res.monotonicity;
        return d;
      },
      py::arg("path"), py::arg("parameter"), py::arg("values"),
      py::arg("quantities"), py::kw_only(), py::arg("gfl_index") = 0,
      "Re-solve the local equivalents (and metrics, when requested) over a "
      "one-parameter grid.");
}
