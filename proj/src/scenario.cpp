#include "mmpt/scenario.hpp"

#include "mmpt/plan_field.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mmpt {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Builtin scenarios. Thresholds mirror the acceptance suite defaults.

const char* kFlatIdentity = R"({
  "name": "flat_identity",
  "space": {"type": "flat_plane", "half_extent": 1.0, "lattice_n": 12},
  "plan": {"generator": "segment_bundle", "k_curves": 16, "n_steps": 1000},
  "frame": {"type": "cartesian", "m": 2.0},
  "initial": {"type": "frame_coefficients", "values": [0.6, -0.8]},
  "solver": {"tol": 1e-12, "max_iter": 200},
  "checks": {"norm_drift_max": 1e-10, "gram_drift_max": 1e-10,
             "roundtrip_max": 1e-10, "oracle_gap_max": 1e-10},
  "outputs": {"directory": "out/flat_identity"}
})";

const char* kSphereLatitude = R"({
  "name": "sphere_latitude_pi3",
  "space": {"type": "round_sphere", "radius": 1.0},
  "plan": {"generator": "latitude_circle", "theta0": 1.0471975511965976,
           "k_curves": 16, "n_steps": 2000},
  "frame": {"type": "sphere_orthonormal", "m": 8.0},
  "initial": {"type": "frame_coefficients", "values": [1.0, 0.0]},
  "solver": {"tol": 1e-12, "max_iter": 200},
  "checks": {"norm_drift_max": 1e-8, "gram_drift_max": 1e-8,
             "roundtrip_max": 1e-8, "oracle_gap_max": 1e-6,
             "holonomy_target": 3.141592653589793, "holonomy_tol": 1e-3},
  "outputs": {"directory": "out/sphere_latitude_pi3"}
})";

// The triangle's corner kinks cost the interpolating reference integrator one
// order locally, so the oracle budget is wider than on smooth loops; the
// transport itself stays second-order accurate (norm drift scales as dt^2).
const char* kSphereOctant = R"({
  "name": "sphere_octant_triangle",
  "space": {"type": "round_sphere", "radius": 1.0},
  "plan": {"generator": "spherical_triangle", "n_steps": 48000},
  "frame": {"type": "sphere_orthonormal", "m": 8.0},
  "initial": {"type": "frame_coefficients", "values": [1.0, 0.0]},
  "solver": {"tol": 1e-12, "max_iter": 200},
  "checks": {"norm_drift_max": 1e-8, "gram_drift_max": 1e-8,
             "roundtrip_max": 1e-8, "oracle_gap_max": 1e-4,
             "holonomy_target": 1.5707963267948966, "holonomy_tol": 1e-3},
  "outputs": {"directory": "out/sphere_octant_triangle"}
})";

double get_num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ParseError(std::string("config: '") + key + "' must be a number");
  return j[key].get<double>();
}

Vec get_vec(const json& j) {
  if (!j.is_array()) throw ParseError("config: expected a numeric array");
  Vec v(static_cast<Index>(j.size()));
  Index i = 0;
  for (const auto& e : j) {
    if (!e.is_number()) throw ParseError("config: expected a numeric array");
    v[i++] = e.get<double>();
  }
  return v;
}

double param(const std::map<std::string, double>& m, const std::string& key, double fallback) {
  auto it = m.find(key);
  return it == m.end() ? fallback : it->second;
}

// ---------------------------------------------------------------------------
// Pipeline assembly. Builder/generator lookups throw ValidationError.

// Library preconditions surface as invalid_argument/runtime_error; at the
// scenario boundary they are validation failures with the stage named.
template <typename Fn>
auto validated(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw ValidationError(std::string(stage) + " stage failed: " + e.what());
  }
}


ChartSpace build_space(const ScenarioConfig& c) {
  const auto& p = c.space_params;
  if (c.space_type == "flat_plane")
    return flat_plane(param(p, "half_extent", 1.0),
                      static_cast<Index>(param(p, "lattice_n", 12)));
  if (c.space_type == "round_sphere")
    return round_sphere(param(p, "radius", 1.0), param(p, "band_lo", M_PI / 6.0),
                        param(p, "band_hi", 5.0 * M_PI / 6.0),
                        static_cast<Index>(param(p, "lattice_n_theta", 25)),
                        static_cast<Index>(param(p, "lattice_n_phi", 48)));
  if (c.space_type == "flat_torus")
    return flat_torus(param(p, "period_x", 1.0), param(p, "period_y", 1.0),
                      static_cast<Index>(param(p, "lattice_n", 16)));
  if (c.space_type == "cone")
    return cone(param(p, "apex_factor", 0.75), param(p, "r_lo", 0.4), param(p, "r_hi", 1.6),
                static_cast<Index>(param(p, "lattice_n_r", 13)),
                static_cast<Index>(param(p, "lattice_n_phi", 40)));
  if (c.space_type == "two_strata_strip")
    return two_strata_strip(param(p, "half_extent", 1.0),
                            static_cast<Index>(param(p, "lattice_n", 12)));
  throw ValidationError("unknown space builder '" + c.space_type + "'");
}

RegionPredicate box_region(const Vec& lo, const Vec& hi) {
  return [lo, hi](const Vec& x) {
    for (Index i = 0; i < lo.size(); ++i)
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
  };
}

TestPlan build_plan(const ScenarioConfig& c, const ChartSpace& space) {
  const TimeGrid grid{c.n_steps};
  if (c.plan_generator == "segment_bundle") return segment_bundle_plan(space, c.k_curves, grid);
  if (c.plan_generator == "latitude_circle")
    return latitude_circle_plan(space, param(c.plan_params, "theta0", M_PI / 3.0), c.k_curves,
                                grid);
  if (c.plan_generator == "spherical_triangle") return spherical_triangle_plan(space, c.n_steps);
  if (c.plan_generator == "custom_waypoints") {
    Vec weights = Vec::Constant(static_cast<Index>(c.waypoints.size()),
                                1.0 / static_cast<double>(c.waypoints.size()));
    return custom_waypoints_plan(space, c.waypoints, weights, grid);
  }
  if (c.plan_generator == "geodesic") {
    if (c.source_lo.size() != space.dim || c.target_lo.size() != space.dim)
      throw ValidationError("geodesic generator needs source/target boxes of chart dimension");
    return build_geodesic_plan(space, box_region(c.source_lo, c.source_hi),
                               box_region(c.target_lo, c.target_hi), c.k_curves, grid, c.seed);
  }
  throw ValidationError("unknown plan generator '" + c.plan_generator + "'");
}

FrameField build_frame(const ScenarioConfig& c, const ChartSpace& space) {
  if (c.frame_type == "cartesian") return cartesian_frame(c.frame_m);
  if (c.frame_type == "sphere_orthonormal") return sphere_orthonormal_frame(c.frame_m);
  if (c.frame_type == "cone_orthonormal")
    return cone_orthonormal_frame(param(c.space_params, "apex_factor", 0.75), c.frame_m);
  if (c.frame_type == "two_strata") return two_strata_frame(c.frame_m);
  if (c.frame_type == "constant") {
    if (c.frame_vectors.empty()) throw ValidationError("constant frame needs 'vectors'");
    FrameField f;
    f.m_constant = c.frame_m;
    for (const Vec& v : c.frame_vectors) {
      if (v.size() != space.dim)
        throw ValidationError("constant frame vector dimension mismatch");
      VectorField w;
      w.eval = [v](const Vec&) { return v; };
      const Index d = space.dim;
      w.jacobian = [d](const Vec&) { return Mat::Zero(d, d); };
      f.fields.push_back(std::move(w));
    }
    return f;
  }
  throw ValidationError("unknown frame '" + c.frame_type + "'");
}

std::vector<Vec> build_initial(const ScenarioConfig& c, const ChartSpace& space,
                               const TestPlan& plan, const FrameField& frame) {
  const Index n = static_cast<Index>(frame.fields.size());
  std::vector<Vec> initial;
  if (c.initial_type == "chart_components") {
    if (c.initial_values.size() != space.dim)
      throw ValidationError("initial chart_components must have chart dimension");
    initial.assign(static_cast<std::size_t>(plan.n_curves()), c.initial_values);
    return initial;
  }
  if (c.initial_type == "frame_coefficients") {
    if (c.initial_values.size() != n)
      throw ValidationError("initial frame_coefficients must have one entry per frame field");
    for (Index k = 0; k < plan.n_curves(); ++k) {
      const Vec x = plan.position(k, 0);
      Vec v = Vec::Zero(space.dim);
      for (Index i = 0; i < n; ++i)
        v += c.initial_values[i] * frame.fields[static_cast<std::size_t>(i)].value(x);
      initial.push_back(v);
    }
    return initial;
  }
  throw ValidationError("unknown initial spec '" + c.initial_type + "'");
}

void check_good_base(const ChartSpace& space, const FrameField& frame) {
  const GoodBaseReport report =
      validated("frame", [&] { return validate_good_base(space, frame); });
  if (report.passes) return;
  std::ostringstream msg;
  msg << "frame fails the good-base bounds:";
  if (report.margin_norm_lower <= 0.0) msg << " margin_norm_lower=" << report.margin_norm_lower;
  if (report.margin_norm_upper <= 0.0) msg << " margin_norm_upper=" << report.margin_norm_upper;
  if (report.margin_offdiag <= 0.0) msg << " margin_offdiag=" << report.margin_offdiag;
  if (report.margin_hs < 0.0) msg << " margin_hs=" << report.margin_hs;
  if (!report.violations.empty()) {
    const auto& w = report.violations.front();
    msg << " (first witness: " << w.kind << " field " << w.field_i << " sample " << w.sample
        << " value " << w.value << ")";
  }
  throw ValidationError(msg.str());
}

void write_norms_csv(const std::string& path, const ChartSpace& space, const TestPlan& plan,
                     const PlanField& field) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open output file " + path);
  out << "node,norm\n";
  char buf[40];
  for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
    std::snprintf(buf, sizeof(buf), "%.17g", plan_norm(space, plan, field, t));
    out << t << ',' << buf << '\n';
  }
}

}  // namespace

ScenarioConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("config root must be an object");
  for (const char* section : {"space", "plan", "frame", "initial"})
    if (!j.contains(section) || !j[section].is_object())
      throw ParseError(std::string("config: missing '") + section + "' section");

  ScenarioConfig c;
  c.name = j.value("name", std::string("unnamed"));

  const json& sp = j["space"];
  if (!sp.contains("type") || !sp["type"].is_string())
    throw ParseError("config: space.type must be a string");
  c.space_type = sp["type"].get<std::string>();
  for (auto it = sp.begin(); it != sp.end(); ++it)
    if (it.value().is_number()) c.space_params[it.key()] = it.value().get<double>();

  const json& pl = j["plan"];
  if (!pl.contains("generator") || !pl["generator"].is_string())
    throw ParseError("config: plan.generator must be a string");
  c.plan_generator = pl["generator"].get<std::string>();
  c.n_steps = static_cast<Index>(get_num(pl, "n_steps", 1000));
  c.k_curves = static_cast<Index>(get_num(pl, "k_curves", 1));
  c.seed = static_cast<std::uint64_t>(get_num(pl, "seed", 1));
  for (auto it = pl.begin(); it != pl.end(); ++it)
    if (it.value().is_number()) c.plan_params[it.key()] = it.value().get<double>();
  if (pl.contains("waypoints")) {
    if (!pl["waypoints"].is_array()) throw ParseError("config: plan.waypoints must be an array");
    for (const auto& curve : pl["waypoints"]) {
      if (!curve.is_array() || curve.empty())
        throw ParseError("config: each waypoint curve must be a nonempty array of points");
      Mat pts(static_cast<Index>(curve.front().size()), static_cast<Index>(curve.size()));
      Index col = 0;
      for (const auto& pt : curve) {
        const Vec v = get_vec(pt);
        if (v.size() != pts.rows()) throw ParseError("config: ragged waypoint point");
        pts.col(col++) = v;
      }
      c.waypoints.push_back(std::move(pts));
    }
  }
  for (const char* box : {"source", "target"}) {
    if (!pl.contains(box)) continue;
    const json& b = pl[box];
    if (!b.is_object() || !b.contains("lo") || !b.contains("hi"))
      throw ParseError(std::string("config: plan.") + box + " must carry lo/hi arrays");
    Vec lo = get_vec(b["lo"]), hi = get_vec(b["hi"]);
    if (std::string(box) == "source") {
      c.source_lo = lo;
      c.source_hi = hi;
    } else {
      c.target_lo = lo;
      c.target_hi = hi;
    }
  }

  const json& fr = j["frame"];
  if (!fr.contains("type") || !fr["type"].is_string())
    throw ParseError("config: frame.type must be a string");
  c.frame_type = fr["type"].get<std::string>();
  c.frame_m = get_num(fr, "m", 2.0);
  if (fr.contains("vectors")) {
    if (!fr["vectors"].is_array()) throw ParseError("config: frame.vectors must be an array");
    for (const auto& v : fr["vectors"]) c.frame_vectors.push_back(get_vec(v));
  }

  const json& in = j["initial"];
  c.initial_type = in.value("type", std::string("frame_coefficients"));
  if (!in.contains("values")) throw ParseError("config: initial.values is required");
  c.initial_values = get_vec(in["values"]);

  if (j.contains("solver")) {
    const json& so = j["solver"];
    if (!so.is_object()) throw ParseError("config: solver must be an object");
    c.tol = get_num(so, "tol", 1e-12);
    c.max_iter = static_cast<int>(get_num(so, "max_iter", 200));
  }
  if (j.contains("outputs")) {
    const json& ou = j["outputs"];
    if (ou.contains("directory")) {
      if (!ou["directory"].is_string()) throw ParseError("config: outputs.directory must be a string");
      c.out_dir = ou["directory"].get<std::string>();
    }
  }
  if (j.contains("checks")) {
    const json& ch = j["checks"];
    if (!ch.is_object()) throw ParseError("config: checks must be an object");
    for (auto it = ch.begin(); it != ch.end(); ++it) {
      if (!it.value().is_number()) throw ParseError("config: check thresholds must be numbers");
      c.checks[it.key()] = it.value().get<double>();
    }
  }
  return c;
}

std::vector<std::string> builtin_scenarios() {
  return {"flat_identity", "sphere_latitude_pi3", "sphere_octant_triangle"};
}

std::string builtin_config_text(const std::string& name) {
  if (name == "flat_identity") return kFlatIdentity;
  if (name == "sphere_latitude_pi3") return kSphereLatitude;
  if (name == "sphere_octant_triangle") return kSphereOctant;
  throw ValidationError("unknown builtin scenario '" + name + "'");
}

ScenarioConfig load_config(const std::string& path_or_builtin) {
  for (const std::string& b : builtin_scenarios())
    if (path_or_builtin == b) return parse_config_json(builtin_config_text(b));
  std::ifstream in(path_or_builtin);
  if (!in) throw ParseError("cannot read config file '" + path_or_builtin + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_json(buf.str());
}

void validate_scenario(const ScenarioConfig& config) {
  if (config.n_steps < 8) throw ValidationError("n_steps must be at least 8");
  if (config.k_curves < 1) throw ValidationError("k_curves must be at least 1");
  if (!(config.tol > 0.0)) throw ValidationError("solver tol must be positive");
  if (config.max_iter < 1) throw ValidationError("solver max_iter must be at least 1");
  const ChartSpace space = validated("space", [&] { return build_space(config); });
  const TestPlan plan = validated("plan", [&] { return build_plan(config, space); });
  const FrameField frame = validated("frame", [&] { return build_frame(config, space); });
  check_good_base(space, frame);
  (void)validated("initial", [&] { return build_initial(config, space, plan, frame); });
}

RunReport run_scenario(const ScenarioConfig& config, const std::string& out_dir_override) {
  if (config.n_steps < 8) throw ValidationError("n_steps must be at least 8");
  if (config.k_curves < 1) throw ValidationError("k_curves must be at least 1");
  if (!(config.tol > 0.0)) throw ValidationError("solver tol must be positive");
  if (config.max_iter < 1) throw ValidationError("solver max_iter must be at least 1");

  const ChartSpace space = validated("space", [&] { return build_space(config); });
  const TestPlan plan = validated("plan", [&] { return build_plan(config, space); });
  const FrameField frame = validated("frame", [&] { return build_frame(config, space); });
  check_good_base(space, frame);
  const std::vector<Vec> initial =
      validated("initial", [&] { return build_initial(config, space, plan, frame); });

  RunReport report;
  report.scenario = config.name;
  report.lip_constant = plan.lip_constant;
  report.compression = validated("plan", [&] { return compression_constant(space, plan); });
  report.base = validate_good_base(space, frame);

  try {
    report.transport = parallel_transport(space, plan, frame, initial, config.tol, config.max_iter);
    report.certificates = transport_certificates(space, plan, frame, config.tol, config.max_iter);
  } catch (const std::exception& e) {
    throw SolverError(std::string("transport stage failed: ") + e.what());
  }

  auto threshold = [&](const std::string& key, double fallback) {
    auto it = config.checks.find(key);
    return it == config.checks.end() ? fallback : it->second;
  };
  auto add_row = [&](const std::string& name, double value, double max) {
    report.suite.push_back({name, value, max, value <= max});
  };
  add_row("norm_drift", report.transport.diag.norm_drift, threshold("norm_drift_max", 1e-8));
  add_row("gram_drift", report.certificates.isometry_defect, threshold("gram_drift_max", 1e-8));
  add_row("roundtrip_defect", report.certificates.roundtrip_defect,
          threshold("roundtrip_max", 1e-8));
  add_row("oracle_gap", report.transport.diag.oracle_gap, threshold("oracle_gap_max", 1e-6));
  if (config.checks.count("holonomy_target")) {
    const double target = config.checks.at("holonomy_target");
    const double tol = threshold("holonomy_tol", 1e-3);
    double worst = 0.0;
    for (Index k = 0; k < report.transport.holonomy.size(); ++k)
      worst = std::max(worst, std::abs(std::abs(report.transport.holonomy[k]) - target));
    add_row("holonomy", worst, tol);
  }
  report.all_pass = true;
  for (const SuiteRow& row : report.suite) report.all_pass = report.all_pass && row.pass;

  // Output directory: explicit override, then environment, then config.
  std::string out_dir = out_dir_override;
  if (out_dir.empty()) {
    const char* env = std::getenv("MMPT_OUT_DIR");
    if (env != nullptr && env[0] != '\0') out_dir = env;
  }
  if (out_dir.empty()) out_dir = config.out_dir;
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  write_coefficients_csv((dir / "g.csv").string(), plan, report.transport);
  write_norms_csv((dir / "norms.csv").string(), space, plan, report.transport.field);
  write_holonomy_csv((dir / "holonomy.csv").string(), report.transport);
  write_report_json((dir / "report.json").string(), report, config);
  return report;
}

void write_report_json(const std::string& path, const RunReport& report,
                       const ScenarioConfig& config) {
  json j;
  j["schema_version"] = 1;
  j["scenario"] = report.scenario;
  j["space"] = config.space_type;
  j["plan"] = {{"generator", config.plan_generator},
               {"n_curves", config.k_curves},
               {"n_steps", config.n_steps},
               {"lip_constant", report.lip_constant},
               {"compression", report.compression}};
  j["good_base"] = {{"passes", report.base.passes},
                    {"margin_norm_lower", report.base.margin_norm_lower},
                    {"margin_norm_upper", report.base.margin_norm_upper},
                    {"margin_offdiag", report.base.margin_offdiag},
                    {"margin_hs", report.base.margin_hs},
                    {"violations", report.base.violations.size()}};
  j["transport"] = {{"norm_drift", report.transport.diag.norm_drift},
                    {"leibniz_defect", report.transport.diag.leibniz_defect},
                    {"oracle_gap", report.transport.diag.oracle_gap},
                    {"residual", report.transport.diag.residual},
                    {"picard_iterations", report.transport.diag.picard_iterations},
                    {"gram_drift", report.certificates.isometry_defect},
                    {"roundtrip_defect", report.certificates.roundtrip_defect}};
  std::vector<double> hol(report.transport.holonomy.data(),
                          report.transport.holonomy.data() + report.transport.holonomy.size());
  j["holonomy"] = hol;
  json suite = json::array();
  for (const SuiteRow& row : report.suite)
    suite.push_back({{"name", row.name},
                     {"value", row.value},
                     {"threshold", row.threshold},
                     {"pass", row.pass}});
  j["suite"] = suite;
  j["all_pass"] = report.all_pass;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open report file " + path);
  out << j.dump(2) << '\n';
}

}  // namespace mmpt
