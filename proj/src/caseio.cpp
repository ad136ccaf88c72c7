#include "coidyn/caseio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coidyn/errors.hpp"

namespace coidyn {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ValidationError(path, what);
}

const json& member(const json& j, const std::string& path, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "missing field");
  return *it;
}

double num(const json& j, const std::string& path, const char* key) {
  const json& v = member(j, path, key);
  if (!v.is_number()) fail(path + "." + key, "must be a number");
  return v.get<double>();
}

double num_or(const json& j, const std::string& path, const char* key,
              double fallback) {
  if (!j.contains(key)) return fallback;
  return num(j, path, key);
}

int integer(const json& j, const std::string& path, const char* key) {
  const json& v = member(j, path, key);
  if (!v.is_number_integer()) fail(path + "." + key, "must be an integer");
  return v.get<int>();
}

bool flag_or(const json& j, const std::string& path, const char* key,
             bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) fail(path + "." + key, "must be true or false");
  return v.get<bool>();
}

std::string text(const json& j, const std::string& path, const char* key) {
  const json& v = member(j, path, key);
  if (!v.is_string()) fail(path + "." + key, "must be a string");
  return v.get<std::string>();
}

const json& array(const json& j, const std::string& path, const char* key) {
  const json& v = member(j, path, key);
  if (!v.is_array()) fail(path + "." + key, "must be an array");
  return v;
}

// File buses are 1-based; convert and bounds-check.
int bus_index(const json& j, const std::string& path, const char* key,
              int bus_count) {
  const int b = integer(j, path, key);
  if (b < 1 || b > bus_count) {
    fail(path + "." + key,
         "bus " + std::to_string(b) + " outside 1.." + std::to_string(bus_count));
  }
  return b - 1;
}

json parse_json(const std::string& content, const std::string& what) {
  json j = json::parse(content, nullptr, false);
  if (j.is_discarded()) fail(what, "malformed JSON");
  if (!j.is_object()) fail(what, "top level must be an object");
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_balance(const CaseFile& c) {
  double dispatched = 0.0;
  for (size_t i = 0; i < c.system.sgs.size(); ++i) {
    if (!c.system.sg_dispatch[i].slack) dispatched += c.system.sg_dispatch[i].p;
  }
  for (const GflDispatch& d : c.system.gfl_dispatch) dispatched += d.p;
  double load = 0.0;
  for (const ShuntLoad& l : c.system.net.shunt_loads) load += l.y.real();
  if (std::abs(load - dispatched) > c.slack_tolerance_pu) {
    fail("case", "dispatch/load imbalance " +
                     std::to_string(load - dispatched) + " pu exceeds slack tolerance " +
                     std::to_string(c.slack_tolerance_pu) + " pu");
  }
}

}  // namespace

CaseFile parse_case_text(const std::string& content) {
  const json j = parse_json(content, "case");
  CaseFile c;
  c.name = text(j, "case", "name");

  const json& sysj = member(j, "case", "system");
  c.system.f_hz = num(sysj, "system", "f_hz");
  if (!(c.system.f_hz > 0.0)) fail("system.f_hz", "must be positive");
  c.s_base_mva = num_or(sysj, "system", "s_base_mva", 100.0);
  c.slack_tolerance_pu = num_or(sysj, "system", "slack_tolerance_pu", 10.0);

  const json& netj = member(j, "case", "network");
  NetworkCase& net = c.system.net;
  net.bus_count = integer(netj, "network", "bus_count");
  if (net.bus_count < 1) fail("network.bus_count", "must be at least 1");

  size_t idx = 0;
  for (const json& bj : array(netj, "network", "branches")) {
    const std::string path = "network.branches[" + std::to_string(idx++) + "]";
    Branch b;
    b.from_bus = bus_index(bj, path, "from_bus", net.bus_count);
    b.to_bus = bus_index(bj, path, "to_bus", net.bus_count);
    const double r = num_or(bj, path, "r_pu", 0.0);
    const double x = num(bj, path, "x_pu");
    if (r == 0.0 && x == 0.0) fail(path, "branch impedance is zero");
    b.z_series = Complex(r, x);
    b.b_charging = num_or(bj, path, "b_charging_pu", 0.0);
    net.branches.push_back(b);
  }
  if (netj.contains("loads")) {
    idx = 0;
    for (const json& lj : array(netj, "network", "loads")) {
      const std::string path = "network.loads[" + std::to_string(idx++) + "]";
      ShuntLoad l;
      l.bus = bus_index(lj, path, "bus", net.bus_count);
      // Consuming load P + jQ at 1 pu becomes the admittance P - jQ.
      l.y = Complex(num(lj, path, "p_pu"), -num_or(lj, path, "q_pu", 0.0));
      net.shunt_loads.push_back(l);
    }
  }

  idx = 0;
  for (const json& mj : array(j, "case", "sync_machines")) {
    const std::string path = "sync_machines[" + std::to_string(idx++) + "]";
    SgParams sg;
    sg.name = text(mj, path, "name");
    sg.bus = bus_index(mj, path, "bus", net.bus_count);
    sg.rated_power = num(mj, path, "rated_power_pu");
    if (!(sg.rated_power > 0.0)) fail(path + ".rated_power_pu", "must be positive");
    sg.inertia_h_s = num(mj, path, "inertia_h_s");
    if (!(sg.inertia_h_s > 0.0)) fail(path + ".inertia_h_s", "must be positive");
    sg.x_dprime = num(mj, path, "x_dprime_pu");
    if (!(sg.x_dprime > 0.0)) fail(path + ".x_dprime_pu", "must be positive");
    if (mj.contains("governor")) {
      const json& gj = mj.at("governor");
      sg.governor.enabled = flag_or(gj, path + ".governor", "enabled", true);
      sg.governor.gain = num(gj, path + ".governor", "gain_pu");
      sg.governor.time_constant_s = num(gj, path + ".governor", "time_constant_s");
      if (!(sg.governor.time_constant_s > 0.0)) {
        fail(path + ".governor.time_constant_s", "must be positive");
      }
    }
    const json& dj = member(mj, path, "dispatch");
    SgDispatch dis;
    dis.slack = flag_or(dj, path + ".dispatch", "slack", false);
    dis.v_setpoint = num(dj, path + ".dispatch", "v_setpoint_pu");
    if (!(dis.v_setpoint > 0.0)) fail(path + ".dispatch.v_setpoint_pu", "must be positive");
    dis.p = dis.slack ? 0.0 : num(dj, path + ".dispatch", "p_pu");
    c.system.sgs.push_back(sg);
    c.system.sg_dispatch.push_back(dis);
    net.sg_units.push_back(SgTap{sg.bus, sg.x_dprime});
  }
  if (c.system.sgs.empty()) fail("sync_machines", "at least one machine required");
  int slack_count = 0;
  for (const SgDispatch& d : c.system.sg_dispatch) slack_count += d.slack ? 1 : 0;
  if (slack_count != 1) fail("sync_machines", "exactly one slack machine required");

  if (j.contains("gfl_converters")) {
    idx = 0;
    for (const json& gj : array(j, "case", "gfl_converters")) {
      const std::string path = "gfl_converters[" + std::to_string(idx++) + "]";
      GflParams g;
      g.name = text(gj, path, "name");
      g.bus = bus_index(gj, path, "bus", net.bus_count);
      g.rated_power = num_or(gj, path, "rated_power_pu", 1.0);
      const json& dcj = member(gj, path, "dc");
      g.dc_capacitance = num(dcj, path + ".dc", "capacitance_pu_s");
      if (!(g.dc_capacitance > 0.0)) fail(path + ".dc.capacitance_pu_s", "must be positive");
      g.dc_voltage_setpoint = num_or(dcj, path + ".dc", "voltage_setpoint_pu", 1.0);
      if (!(g.dc_voltage_setpoint > 0.0)) {
        fail(path + ".dc.voltage_setpoint_pu", "must be positive");
      }
      g.dc_voltage_initial = g.dc_voltage_setpoint;
      g.kp_dc = num(dcj, path + ".dc", "kp");
      g.ki_dc = num(dcj, path + ".dc", "ki");
      const json& pllj = member(gj, path, "pll");
      g.kp_pll = num(pllj, path + ".pll", "kp");
      g.ki_pll = num(pllj, path + ".pll", "ki");
      g.filter_x = num(gj, path, "filter_x_pu");
      if (!(g.filter_x > 0.0)) fail(path + ".filter_x_pu", "must be positive");
      g.max_current = num_or(gj, path, "max_current_pu", 1e9);
      const json& dj = member(gj, path, "dispatch");
      GflDispatch dis;
      dis.p = num(dj, path + ".dispatch", "p_pu");
      dis.q = num_or(dj, path + ".dispatch", "q_pu", 0.0);
      c.system.gfls.push_back(g);
      c.system.gfl_dispatch.push_back(dis);
      net.gfl_buses.push_back(g.bus);
    }
  }

  if (j.contains("disturbance")) {
    const json& dj = j.at("disturbance");
    Disturbance d;
    d.bus = bus_index(dj, "disturbance", "bus", net.bus_count);
    d.delta_admittance = Complex(num_or(dj, "disturbance", "delta_g_pu", 0.0),
                                 num_or(dj, "disturbance", "delta_b_pu", 0.0));
    if (d.delta_admittance == Complex(0.0, 0.0)) {
      fail("disturbance", "delta_g_pu and delta_b_pu are both zero");
    }
    d.time_s = num(dj, "disturbance", "time_s");
    if (!(d.time_s > 0.0)) fail("disturbance.time_s", "must be positive");
    c.disturbance = d;
  }

  if (j.contains("sim")) {
    const json& sj = j.at("sim");
    c.sim.dt_s = num_or(sj, "sim", "dt_s", c.sim.dt_s);
    c.sim.duration_s = num_or(sj, "sim", "duration_s", c.sim.duration_s);
    if (sj.contains("integrator")) {
      const std::string name = text(sj, "sim", "integrator");
      if (name == "rk4") {
        c.sim.integrator = Integrator::kRk4;
      } else if (name == "rk45") {
        c.sim.integrator = Integrator::kRk45;
      } else {
        fail("sim.integrator", "must be rk4 or rk45");
      }
    }
    c.sim.abs_tol = num_or(sj, "sim", "abs_tol", c.sim.abs_tol);
    c.sim.rel_tol = num_or(sj, "sim", "rel_tol", c.sim.rel_tol);
    if (sj.contains("output_stride")) {
      c.sim.output_stride = integer(sj, "sim", "output_stride");
    }
  }

  check_balance(c);
  return c;
}

CaseFile load_case(const std::string& path) {
  try {
    return parse_case_text(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path, e.what());
  }
}

std::string serialize_case(const CaseFile& c) {
  json j;
  j["name"] = c.name;
  j["system"] = {{"f_hz", c.system.f_hz},
                 {"s_base_mva", c.s_base_mva},
                 {"slack_tolerance_pu", c.slack_tolerance_pu}};

  json branches = json::array();
  for (const Branch& b : c.system.net.branches) {
    branches.push_back({{"from_bus", b.from_bus + 1},
                        {"to_bus", b.to_bus + 1},
                        {"r_pu", b.z_series.real()},
                        {"x_pu", b.z_series.imag()},
                        {"b_charging_pu", b.b_charging}});
  }
  json loads = json::array();
  for (const ShuntLoad& l : c.system.net.shunt_loads) {
    loads.push_back({{"bus", l.bus + 1},
                     {"p_pu", l.y.real()},
                     {"q_pu", -l.y.imag()}});
  }
  j["network"] = {{"bus_count", c.system.net.bus_count},
                  {"branches", branches},
                  {"loads", loads}};

  json machines = json::array();
  for (size_t i = 0; i < c.system.sgs.size(); ++i) {
    const SgParams& sg = c.system.sgs[i];
    const SgDispatch& d = c.system.sg_dispatch[i];
    json mj = {{"name", sg.name},
               {"bus", sg.bus + 1},
               {"rated_power_pu", sg.rated_power},
               {"inertia_h_s", sg.inertia_h_s},
               {"x_dprime_pu", sg.x_dprime},
               {"governor",
                {{"enabled", sg.governor.enabled},
                 {"gain_pu", sg.governor.gain},
                 {"time_constant_s", sg.governor.time_constant_s}}}};
    json dj = {{"slack", d.slack}, {"v_setpoint_pu", d.v_setpoint}};
    if (!d.slack) dj["p_pu"] = d.p;
    mj["dispatch"] = dj;
    machines.push_back(mj);
  }
  j["sync_machines"] = machines;

  if (!c.system.gfls.empty()) {
    json gfls = json::array();
    for (size_t i = 0; i < c.system.gfls.size(); ++i) {
      const GflParams& g = c.system.gfls[i];
      const GflDispatch& d = c.system.gfl_dispatch[i];
      gfls.push_back({{"name", g.name},
                      {"bus", g.bus + 1},
                      {"rated_power_pu", g.rated_power},
                      {"dc",
                       {{"capacitance_pu_s", g.dc_capacitance},
                        {"voltage_setpoint_pu", g.dc_voltage_setpoint},
                        {"kp", g.kp_dc},
                        {"ki", g.ki_dc}}},
                      {"pll", {{"kp", g.kp_pll}, {"ki", g.ki_pll}}},
                      {"filter_x_pu", g.filter_x},
                      {"max_current_pu", g.max_current},
                      {"dispatch", {{"p_pu", d.p}, {"q_pu", d.q}}}});
    }
    j["gfl_converters"] = gfls;
  }

  if (c.disturbance) {
    j["disturbance"] = {{"bus", c.disturbance->bus + 1},
                        {"delta_g_pu", c.disturbance->delta_admittance.real()},
                        {"delta_b_pu", c.disturbance->delta_admittance.imag()},
                        {"time_s", c.disturbance->time_s}};
  }

  j["sim"] = {{"dt_s", c.sim.dt_s},
              {"duration_s", c.sim.duration_s},
              {"integrator", c.sim.integrator == Integrator::kRk4 ? "rk4" : "rk45"},
              {"abs_tol", c.sim.abs_tol},
              {"rel_tol", c.sim.rel_tol},
              {"output_stride", c.sim.output_stride}};

  return j.dump(2) + "\n";
}

RunManifest parse_manifest_text(const std::string& content) {
  const json j = parse_json(content, "manifest");
  RunManifest m;
  m.case_path = text(j, "manifest", "case");
  if (j.contains("variants")) {
    m.variants.clear();
    for (const json& v : array(j, "manifest", "variants")) {
      if (!v.is_string()) fail("manifest.variants", "entries must be strings");
      m.variants.push_back(v.get<std::string>());
    }
    if (m.variants.empty()) fail("manifest.variants", "at least one variant required");
  }
  if (j.contains("output_dir")) m.output_dir = text(j, "manifest", "output_dir");
  m.compare = flag_or(j, "manifest", "compare", false);
  m.signed_error_index = flag_or(j, "manifest", "signed_error_index", false);
  m.x_filter_error_pct = num_or(j, "manifest", "x_filter_error_pct", 0.0);
  if (j.contains("seed")) {
    m.seed = static_cast<unsigned long>(integer(j, "manifest", "seed"));
  }
  if (j.contains("sim")) {
    const json& sj = j.at("sim");
    if (sj.contains("dt_s")) m.dt_s = num(sj, "manifest.sim", "dt_s");
    if (sj.contains("duration_s")) m.duration_s = num(sj, "manifest.sim", "duration_s");
    if (sj.contains("integrator")) m.integrator = text(sj, "manifest.sim", "integrator");
    if (sj.contains("output_stride")) {
      m.output_stride = integer(sj, "manifest.sim", "output_stride");
    }
  }
  if (j.contains("sweeps")) {
    size_t idx = 0;
    for (const json& sj : array(j, "manifest", "sweeps")) {
      const std::string path = "manifest.sweeps[" + std::to_string(idx++) + "]";
      SweepSpec spec;
      spec.parameter = text(sj, path, "parameter");
      for (const json& v : array(sj, path, "values")) {
        if (!v.is_number()) fail(path + ".values", "entries must be numbers");
        spec.values.push_back(v.get<double>());
      }
      if (spec.values.empty()) fail(path + ".values", "value grid is empty");
      for (const json& q : array(sj, path, "quantities")) {
        if (!q.is_string()) fail(path + ".quantities", "entries must be strings");
        spec.quantities.push_back(q.get<std::string>());
      }
      if (sj.contains("gfl")) {
        spec.gfl_index = integer(sj, path, "gfl") - 1;  // 1-based in files
        if (spec.gfl_index < 0) fail(path + ".gfl", "must be at least 1");
      }
      m.sweeps.push_back(spec);
    }
  }
  return m;
}

RunManifest load_manifest(const std::string& path) {
  try {
    return parse_manifest_text(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path, e.what());
  }
}

SimConfig effective_sim_config(const CaseFile& c, const RunManifest& m) {
  SimConfig cfg = c.sim;
  if (m.dt_s) cfg.dt_s = *m.dt_s;
  if (m.duration_s) cfg.duration_s = *m.duration_s;
  if (m.integrator) {
    if (*m.integrator == "rk4") {
      cfg.integrator = Integrator::kRk4;
    } else if (*m.integrator == "rk45") {
      cfg.integrator = Integrator::kRk45;
    } else {
      fail("manifest.sim.integrator", "must be rk4 or rk45");
    }
  }
  if (m.output_stride) cfg.output_stride = *m.output_stride;
  return cfg;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string csv_text(const ScenarioResult& r) {
  std::string out = "time_s";
  for (const std::string& name : r.signal_names) {
    out += ',';
    out += name;
  }
  out += '\n';
  for (size_t row = 0; row < r.samples.size(); ++row) {
    out += format_double(r.time_s[row]);
    for (double v : r.samples[row]) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::string sweep_csv_text(const SweepResult& r) {
  std::string out = "value,valid";
  for (const std::string& q : r.spec.quantities) {
    out += ',';
    out += q;
  }
  out += ",message\n";
  for (const SweepRow& row : r.rows) {
    out += format_double(row.value);
    out += row.ok ? ",1" : ",0";
    for (size_t qi = 0; qi < r.spec.quantities.size(); ++qi) {
      out += ',';
      if (row.ok) out += format_double(row.results[qi]);
    }
    out += ',';
    std::string msg = row.message;
    for (char& ch : msg) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    out += msg;
    out += '\n';
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << content;
  if (!out) throw Error("write failed for " + path);
}

std::string metrics_text(
    const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out;
  for (const auto& [key, value] : kv) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  return out;
}

}  // namespace coidyn
