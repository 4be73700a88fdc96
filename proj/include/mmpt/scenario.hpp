#pragma once

#include "mmpt/chart_space.hpp"
#include "mmpt/test_plan.hpp"
#include "mmpt/transport.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmpt {

// Config or report text that does not parse.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// A parsed config whose pieces do not assemble into a valid pipeline (unknown
// builder, frame failing the base bounds, plan escaping the measure, ...).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// The transport solver failing on an otherwise valid scenario.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Declarative scenario: space builder + plan generator + frame + initial
// vector + solver settings + thresholds. Parsed from JSON.
struct ScenarioConfig {
  std::string name;

  std::string space_type;                       // flat_plane | round_sphere | flat_torus |
                                                // cone | two_strata_strip
  std::map<std::string, double> space_params;   // numeric overrides for the builder

  std::string plan_generator;                   // geodesic | latitude_circle | segment_bundle |
                                                // custom_waypoints | spherical_triangle
  Index n_steps = 1000;
  Index k_curves = 1;
  std::uint64_t seed = 1;
  std::map<std::string, double> plan_params;    // generator-specific numbers (theta0, ...)
  std::vector<Mat> waypoints;                   // custom_waypoints: per-curve dim x points
  Vec source_lo, source_hi, target_lo, target_hi;  // geodesic: coordinate boxes

  std::string frame_type;                       // cartesian | sphere_orthonormal |
                                                // cone_orthonormal | two_strata | constant
  double frame_m = 2.0;
  std::vector<Vec> frame_vectors;               // constant frame components

  std::string initial_type = "frame_coefficients";  // or chart_components
  Vec initial_values;

  double tol = 1e-12;
  int max_iter = 200;

  std::string out_dir = "out";
  std::map<std::string, double> checks;         // thresholds; see run_scenario
};

struct SuiteRow {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct RunReport {
  std::string scenario;
  double lip_constant = 0.0;
  double compression = 0.0;
  GoodBaseReport base;
  TransportResult transport;
  TransportCertificates certificates;
  std::vector<SuiteRow> suite;
  bool all_pass = false;
};

ScenarioConfig parse_config_json(const std::string& text);

// Accepts a filesystem path or a builtin scenario name.
ScenarioConfig load_config(const std::string& path_or_builtin);

std::vector<std::string> builtin_scenarios();
std::string builtin_config_text(const std::string& name);

// Builds the pipeline pieces without solving; throws ValidationError on the
// first inconsistency.
void validate_scenario(const ScenarioConfig& config);

// Full pipeline: build, validate, transport, certify; writes report.json,
// g.csv, norms.csv, holonomy.csv into the output directory. Directory
// resolution: `out_dir_override` if nonempty, else $MMPT_OUT_DIR, else the
// config's outputs.directory.
//
// Default thresholds (override via config `checks`): norm_drift_max 1e-8,
// gram_drift_max 1e-8, roundtrip_max 1e-8, oracle_gap_max 1e-6; a holonomy
// row appears when holonomy_target/holonomy_tol are set.
RunReport run_scenario(const ScenarioConfig& config, const std::string& out_dir_override = "");

void write_report_json(const std::string& path, const RunReport& report,
                       const ScenarioConfig& config);

}  // namespace mmpt
