#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coidyn/analysis.hpp"
#include "coidyn/sim.hpp"

namespace coidyn {

// On-disk case: JSON with explicit units in field names and 1-based bus
// numbers. Internally buses are 0-based.
struct CaseFile {
  std::string name;
  double s_base_mva = 100.0;        // documents the pu base, never computed with
  double slack_tolerance_pu = 10.0; // max |dispatched - load| imbalance
  SystemCase system;
  std::optional<Disturbance> disturbance;
  SimConfig sim;
};

CaseFile parse_case_text(const std::string& text);
CaseFile load_case(const std::string& path);
std::string serialize_case(const CaseFile& c);

struct RunManifest {
  std::string case_path;
  std::vector<std::string> variants{"coi"};
  std::string output_dir = ".";
  bool compare = false;
  bool signed_error_index = false;
  double x_filter_error_pct = 0.0;
  unsigned long seed = 0;  // reserved, unused
  std::optional<double> dt_s;
  std::optional<double> duration_s;
  std::optional<std::string> integrator;
  std::optional<int> output_stride;
  std::vector<SweepSpec> sweeps;
};

RunManifest parse_manifest_text(const std::string& text);
RunManifest load_manifest(const std::string& path);

// Case sim settings with manifest overrides folded in.
SimConfig effective_sim_config(const CaseFile& c, const RunManifest& m);

// Shortest round-trip decimal rendering, locale-independent.
std::string format_double(double v);

std::string csv_text(const ScenarioResult& r);
std::string sweep_csv_text(const SweepResult& r);

void write_text_file(const std::string& path, const std::string& content);

// Flat key=value lines in the given order.
std::string metrics_text(
    const std::vector<std::pair<std::string, std::string>>& kv);

}  // namespace coidyn
