#include "mslab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace mslab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void expect_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t derived_seed(std::uint64_t run_seed, const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) h = (h ^ c) * 0x100000001b3ull;
  return splitmix(run_seed ^ h) >> 11;  // stays exact as a JSON double
}

Vec3 vec3(const json& j, const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError(what + ": need 3 entries");
  return {v[0], v[1], v[2]};
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json sweep_json(const SweepOptions& s) {
  return {{"levels", s.levels},
          {"floor_spacings", s.floor_spacings},
          {"bad_mass", s.bad_mass},
          {"bad_region_ratio", s.bad_region_ratio},
          {"bad_r_max_ratio", s.bad_r_max_ratio}};
}

json multiscale_json(const MultiscaleParams& p) {
  return {{"eps0", p.eps0},
          {"eps0_prime", p.eps0_prime},
          {"A", p.A},
          {"U", p.U},
          {"floor_spacings", p.floor_spacings},
          {"orientations", p.fit.orientations},
          {"refine_candidates", p.fit.refine_candidates},
          {"coarse_points", p.fit.coarse_points},
          {"refine_points", p.fit.refine_points},
          {"max_evaluations", p.fit.max_evaluations}};
}

json jump_json(const JumpOptions& o) { return {{"tube", o.tube}, {"max_beta", o.max_beta}}; }

SweepOptions parse_sweep(const json& sw, const json& ms, const json& jp, const std::string& where) {
  expect_keys(sw, {"levels", "floor_spacings", "bad_mass", "bad_region_ratio", "bad_r_max_ratio"}, where + ".sweep");
  expect_keys(ms, {"eps0", "eps0_prime", "A", "U", "floor_spacings", "orientations", "refine_candidates",
                   "coarse_points", "refine_points", "max_evaluations"},
              where + ".multiscale");
  expect_keys(jp, {"tube", "max_beta"}, where + ".jump");
  SweepOptions s;
  s.levels = sw.value("levels", s.levels);
  s.floor_spacings = sw.value("floor_spacings", s.floor_spacings);
  s.bad_mass = sw.value("bad_mass", s.bad_mass);
  s.bad_region_ratio = sw.value("bad_region_ratio", s.bad_region_ratio);
  s.bad_r_max_ratio = sw.value("bad_r_max_ratio", s.bad_r_max_ratio);
  MultiscaleParams& p = s.params;
  p.eps0 = ms.value("eps0", p.eps0);
  p.eps0_prime = ms.value("eps0_prime", p.eps0_prime);
  p.A = ms.value("A", p.A);
  p.U = ms.value("U", p.U);
  p.floor_spacings = ms.value("floor_spacings", p.floor_spacings);
  p.fit.orientations = ms.value("orientations", p.fit.orientations);
  p.fit.refine_candidates = ms.value("refine_candidates", p.fit.refine_candidates);
  p.fit.coarse_points = ms.value("coarse_points", p.fit.coarse_points);
  p.fit.refine_points = ms.value("refine_points", p.fit.refine_points);
  p.fit.max_evaluations = ms.value("max_evaluations", p.fit.max_evaluations);
  s.jump.tube = jp.value("tube", s.jump.tube);
  s.jump.max_beta = jp.value("max_beta", s.jump.max_beta);
  s.jump.fit = p.fit;
  return s;
}

json gauge_json(const GaugeChoice& g) {
  switch (g.form) {
    case GaugeChoice::Form::Zero: return "zero";
    case GaugeChoice::Form::Scene: return "scene";
    case GaugeChoice::Form::Linear: return g.constant;
  }
  return "zero";
}

GaugeChoice parse_gauge(const json& j, const std::string& where) {
  GaugeChoice g;
  if (j.is_number()) {
    g.form = GaugeChoice::Form::Linear;
    g.constant = j.get<double>();
  } else if (j == "zero") {
    g.form = GaugeChoice::Form::Zero;
  } else if (j == "scene") {
    g.form = GaugeChoice::Form::Scene;
  } else {
    throw ConfigError(where + ".gauge: expected \"zero\", \"scene\" or a number");
  }
  return g;
}

json object_or_empty(const json& j, const char* key) { return j.contains(key) ? j.at(key) : json::object(); }

bool safe_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  }) && s != "." && s != "..";
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw MissingInput("missing " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw std::runtime_error("cannot parse " + p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string rel(const fs::path& p, const fs::path& out) { return fs::relative(p, out).generic_string(); }

void require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingInput(what + ": missing " + p.string());
}

Scene read_scene(const SceneEntry& e, const fs::path& out) {
  const fs::path dir = out / "scenes" / e.spec.name;
  require(dir / "scene.json", "scene '" + e.spec.name + "' has not been generated");
  const json meta = read_json(dir / "scene.json");
  json expected;
  to_json(expected, e.spec);
  if (meta.at("spec") != expected)
    throw MissingInput("scene '" + e.spec.name + "' on disk was generated from a different spec; rerun generate");
  Scene s;
  s.spec = e.spec;
  s.cone = cone_from_json(meta.at("cone"));
  s.gauge_constant = meta.at("gauge_constant").get<double>();
  require(dir / "g.bin", "scene '" + e.spec.name + "'");
  s.g = read_grid((dir / "g").string());
  if (e.spec.mode == SceneMode::Exact) {
    require(dir / "K.csv", "scene '" + e.spec.name + "'");
    std::ifstream is(dir / "K.csv");
    s.K = read_csv(is, meta.at("K_spacing").get<double>());
  }
  return s;
}

struct StateFiles {
  ScalarGrid u;
  DiscreteSet K;
  json meta;
};

StateFiles read_state(const SceneEntry& e, const fs::path& out) {
  const fs::path dir = out / "states" / e.spec.name;
  require(dir / "state.json", "scene '" + e.spec.name + "' has not been solved");
  StateFiles s;
  s.meta = read_json(dir / "state.json");
  require(dir / "u.bin", "scene '" + e.spec.name + "'");
  s.u = read_grid((dir / "u").string());
  require(dir / "K.csv", "scene '" + e.spec.name + "'");
  std::ifstream is(dir / "K.csv");
  s.K = read_csv(is, s.meta.at("K_spacing").get<double>());
  return s;
}

GaugeSpec resolve_gauge(const GaugeChoice& g, double scene_constant) {
  switch (g.form) {
    case GaugeChoice::Form::Zero: return GaugeSpec::zero();
    case GaugeChoice::Form::Scene: return GaugeSpec::linear(scene_constant);
    case GaugeChoice::Form::Linear: return GaugeSpec::linear(g.constant);
  }
  return GaugeSpec::zero();
}

std::vector<Vec3> centers_of(const SceneEntry& e) {
  return e.centers.empty() ? std::vector<Vec3>{e.spec.apex} : e.centers;
}

bool wants(const SceneEntry& e, const std::string& check, const std::optional<std::string>& only) {
  if (only && *only != check) return false;
  return std::find(e.checks.begin(), e.checks.end(), check) != e.checks.end();
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

std::string fmt(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_number()) {
    std::ostringstream os;
    os << std::setprecision(4) << v.get<double>();
    return os.str();
  }
  return v.dump();
}

}  // namespace

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n = lemma_check_names();
    n.insert(n.end(), {"beta_exponent", "self_improvement", "energy_smallness"});
    return n;
  }();
  return names;
}

std::string sweep_stem(const std::string& scene, std::size_t center) { return scene + "_c" + std::to_string(center); }

void RunConfig::validate() const {
  try {
    if (!(solver.epsilon >= 0.0 && std::isfinite(solver.epsilon))) throw ConfigError("solver.epsilon must be >= 0");
    if (!(solver.fidelity > 0.0 && std::isfinite(solver.fidelity))) throw ConfigError("solver.fidelity must be > 0");
    if (solver.iters < 1) throw ConfigError("solver.iters must be >= 1");
    if (!(solver.threshold > 0.0 && solver.threshold < 1.0)) throw ConfigError("solver.threshold must be in (0, 1)");
    if (!(solver.options.cg_tolerance > 0.0 && solver.options.stop_relative >= 0.0))
      throw ConfigError("solver: cg_tolerance must be > 0 and stop_relative >= 0");
    checks.options.validate();
    const auto& t = checks.tau;
    if (!(0.0 < t[3] && t[3] < t[2] && t[2] < t[1] && t[1] < t[0]))
      throw ConfigError("checks.tau: need tau1 > tau2 > tau3 > tau4 > 0");
    if (!(checks.b > 0.0)) throw ConfigError("checks.b must be > 0");
    if (!(checks.eps3 > 0.0 && checks.eta2 > 0.0)) throw ConfigError("checks: eps3 and eta2 must be > 0");
    if (!(checks.a0 > 0.0 && checks.a0 < 1.0)) throw ConfigError("checks.a0 must be in (0, 1)");
    if (!(checks.residual_max > 0.0)) throw ConfigError("checks.residual_max must be > 0");
    if (scenes.empty()) throw ConfigError("no scenes");
    std::set<std::string> names;
    for (const SceneEntry& e : scenes) {
      const std::string w = "scene '" + e.spec.name + "'";
      if (!safe_name(e.spec.name)) throw ConfigError(w + ": names may use letters, digits, '_', '-', '.'");
      if (!names.insert(e.spec.name).second) throw ConfigError(w + ": duplicate name");
      if (e.spec.grid < 8) throw ConfigError(w + ": grid must be >= 8");
      if (solver.epsilon > 0.0 && solver.epsilon < 2.0 / e.spec.grid * (1.0 - 1e-12))
        throw ConfigError(w + ": solver.epsilon below two grid spacings");
      if (!(e.r0 > 0.0)) throw ConfigError(w + ": r0 must be > 0");
      if (e.gauge.form == GaugeChoice::Form::Linear && !(e.gauge.constant >= 0.0 && std::isfinite(e.gauge.constant)))
        throw ConfigError(w + ": gauge constant must be >= 0");
      for (const Vec3& x : centers_of(e)) {
        if (!(x.minCoeff() - e.r0 >= 0.0 && x.maxCoeff() + e.r0 <= 1.0))
          throw ConfigError(w + ": B(centre, r0) leaves the unit cube");
      }
      e.sweep.params.validate();
      if (e.sweep.levels < 1) throw ConfigError(w + ": sweep.levels must be >= 1");
      if (!(e.sweep.floor_spacings >= 1.0)) throw ConfigError(w + ": sweep.floor_spacings must be >= 1");
      if (!(e.sweep.bad_region_ratio > 0.0 && e.sweep.bad_region_ratio <= 1.0 && e.sweep.bad_r_max_ratio > 0.0 &&
            e.sweep.bad_r_max_ratio <= 1.0))
        throw ConfigError(w + ": sweep ratios must be in (0, 1]");
      if (!(e.sweep.jump.tube > 0.0 && e.sweep.jump.max_beta > 0.0)) throw ConfigError(w + ": jump options must be > 0");
      for (const std::string& c : e.checks) {
        if (std::find(check_names().begin(), check_names().end(), c) == check_names().end())
          throw ConfigError(w + ": unknown check '" + c + "'");
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
}

RunConfig run_config_from_json(const json& j) {
  try {
    expect_keys(j, {"seed", "grid", "solver", "multiscale", "jump", "sweep", "checks", "scenes"}, "config");
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    const json solver = object_or_empty(j, "solver");
    expect_keys(solver, {"epsilon", "fidelity", "iters", "threshold", "cg_tolerance", "stop_relative"}, "solver");
    c.solver.epsilon = solver.value("epsilon", c.solver.epsilon);
    c.solver.fidelity = solver.value("fidelity", c.solver.fidelity);
    c.solver.iters = solver.value("iters", c.solver.iters);
    c.solver.threshold = solver.value("threshold", c.solver.threshold);
    c.solver.options.cg_tolerance = solver.value("cg_tolerance", c.solver.options.cg_tolerance);
    c.solver.options.stop_relative = solver.value("stop_relative", c.solver.options.stop_relative);

    const json ck = object_or_empty(j, "checks");
    expect_keys(ck, {"stability_cap", "growth_cap", "decay_cap", "bad_mass_cap", "tolerance", "a", "gamma", "tau", "b",
                     "eps3", "a0", "eta2", "alpha_min", "residual_max", "jump_lower_bound"},
                "checks");
    CheckOptions& o = c.checks.options;
    o.stability_cap = ck.value("stability_cap", o.stability_cap);
    o.growth_cap = ck.value("growth_cap", o.growth_cap);
    o.decay_cap = ck.value("decay_cap", o.decay_cap);
    o.bad_mass_cap = ck.value("bad_mass_cap", o.bad_mass_cap);
    o.tolerance = ck.value("tolerance", o.tolerance);
    o.a = ck.value("a", o.a);
    o.gamma = ck.value("gamma", o.gamma);
    if (ck.contains("tau")) {
      const auto t = ck.at("tau").get<std::vector<double>>();
      if (t.size() != 4) throw ConfigError("checks.tau: need 4 entries");
      std::copy(t.begin(), t.end(), c.checks.tau.begin());
    }
    c.checks.b = ck.value("b", c.checks.b);
    c.checks.eps3 = ck.value("eps3", c.checks.eps3);
    c.checks.a0 = ck.value("a0", c.checks.a0);
    c.checks.eta2 = ck.value("eta2", c.checks.eta2);
    c.checks.alpha_min = ck.value("alpha_min", c.checks.alpha_min);
    c.checks.residual_max = ck.value("residual_max", c.checks.residual_max);
    c.checks.jump_lower_bound = ck.value("jump_lower_bound", c.checks.jump_lower_bound);

    const json sweep = object_or_empty(j, "sweep"), ms = object_or_empty(j, "multiscale"), jp = object_or_empty(j, "jump");
    if (!j.contains("scenes") || !j.at("scenes").is_array()) throw ConfigError("config: 'scenes' must be an array");
    for (const json& sj : j.at("scenes")) {
      const std::string where = "scenes[" + std::to_string(c.scenes.size()) + "]";
      expect_keys(sj, {"scene", "centers", "r0", "gauge", "checks", "sweep", "multiscale", "jump"}, where);
      if (!sj.contains("scene")) throw ConfigError(where + ": missing 'scene'");
      json spec = sj.at("scene");
      if (spec.is_object() && !spec.contains("grid") && j.contains("grid")) spec["grid"] = j.at("grid");
      SceneEntry e;
      e.spec = scene_spec_from_json(spec);
      if (!spec.contains("seed")) e.spec.seed = derived_seed(c.seed, e.spec.name);
      for (const json& x : sj.value("centers", json::array())) e.centers.push_back(vec3(x, where + ".centers"));
      e.r0 = sj.value("r0", e.r0);
      if (sj.contains("gauge")) e.gauge = parse_gauge(sj.at("gauge"), where);
      if (sj.contains("checks")) e.checks = sj.at("checks").get<std::vector<std::string>>();
      json s2 = sweep, m2 = ms, j2 = jp;
      s2.merge_patch(object_or_empty(sj, "sweep"));
      m2.merge_patch(object_or_empty(sj, "multiscale"));
      j2.merge_patch(object_or_empty(sj, "jump"));
      e.sweep = parse_sweep(s2, m2, j2, where);
      c.scenes.push_back(std::move(e));
    }
    c.validate();
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingInput("missing config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& ex) {
    throw ConfigError("cannot parse " + path.string() + ": " + ex.what());
  }
  return run_config_from_json(j);
}

json to_json(const RunConfig& c) {
  const CheckOptions& o = c.checks.options;
  json j{{"seed", c.seed},
         {"solver",
          {{"epsilon", c.solver.epsilon},
           {"fidelity", c.solver.fidelity},
           {"iters", c.solver.iters},
           {"threshold", c.solver.threshold},
           {"cg_tolerance", c.solver.options.cg_tolerance},
           {"stop_relative", c.solver.options.stop_relative}}},
         {"checks",
          {{"stability_cap", o.stability_cap},
           {"growth_cap", o.growth_cap},
           {"decay_cap", o.decay_cap},
           {"bad_mass_cap", o.bad_mass_cap},
           {"tolerance", o.tolerance},
           {"a", o.a},
           {"gamma", o.gamma},
           {"tau", c.checks.tau},
           {"b", c.checks.b},
           {"eps3", c.checks.eps3},
           {"a0", c.checks.a0},
           {"eta2", c.checks.eta2},
           {"alpha_min", c.checks.alpha_min},
           {"residual_max", c.checks.residual_max},
           {"jump_lower_bound", c.checks.jump_lower_bound}}}};
  json scenes = json::array();
  for (const SceneEntry& e : c.scenes) {
    json s;
    to_json(s, e.spec);
    json centers = json::array();
    for (const Vec3& x : e.centers) centers.push_back(vec_json(x));
    scenes.push_back({{"scene", s},
                      {"centers", centers},
                      {"r0", e.r0},
                      {"gauge", gauge_json(e.gauge)},
                      {"checks", e.checks},
                      {"sweep", sweep_json(e.sweep)},
                      {"multiscale", multiscale_json(e.sweep.params)},
                      {"jump", jump_json(e.sweep.jump)}});
  }
  j["scenes"] = scenes;
  return j;
}

RunConfig apply_overrides(std::optional<RunConfig> base, const Overrides& o) {
  RunConfig c;
  if (base) {
    c = std::move(*base);
  } else {
    if (!o.scene) throw ConfigError("no config: pass --config or --scene KIND");
    SceneEntry e;
    try {
      e.spec.kind = parse_cone_kind(*o.scene);
    } catch (const std::invalid_argument&) {
      throw ConfigError("unknown scene kind '" + *o.scene + "'");
    }
    e.spec.name = std::string(to_string(e.spec.kind));
    e.spec.seed = derived_seed(o.seed.value_or(c.seed), e.spec.name);
    c.scenes.push_back(e);
  }
  if (o.seed) {
    // derived scene seeds follow the run seed; explicit ones stay put
    for (SceneEntry& e : c.scenes) {
      if (e.spec.seed == derived_seed(c.seed, e.spec.name)) e.spec.seed = derived_seed(*o.seed, e.spec.name);
    }
    c.seed = *o.seed;
  }
  if (base && o.scene) {
    std::vector<SceneEntry> keep;
    for (const SceneEntry& e : c.scenes) {
      if (e.spec.name == *o.scene) keep.push_back(e);
    }
    if (keep.empty()) {
      ConeKind k;
      try {
        k = parse_cone_kind(*o.scene);
      } catch (const std::invalid_argument&) {
        throw ConfigError("no scene named '" + *o.scene + "'");
      }
      for (const SceneEntry& e : c.scenes) {
        if (e.spec.kind == k) keep.push_back(e);
      }
      if (keep.empty()) throw ConfigError("no scene of kind '" + *o.scene + "'");
    }
    c.scenes = keep;
  }
  if (o.grid) {
    for (SceneEntry& e : c.scenes) e.spec.grid = *o.grid;
  }
  if (o.epsilon) c.solver.epsilon = *o.epsilon;
  if (o.fidelity) c.solver.fidelity = *o.fidelity;
  if (o.iters) c.solver.iters = *o.iters;
  c.validate();
  return c;
}

StepResult cmd_generate(const RunConfig& c, const fs::path& out) {
  StepResult res;
  for (const SceneEntry& e : c.scenes) {
    const fs::path dir = out / "scenes" / e.spec.name;
    fs::create_directories(dir);
    const Scene s = make_scene(e.spec);
    write_grid(s.g, (dir / "g").string());
    json spec, cone;
    to_json(spec, e.spec);
    to_json(cone, s.cone);
    json meta{{"spec", spec}, {"cone", cone}, {"gauge_constant", s.gauge_constant}, {"K_spacing", s.K.spacing},
              {"K_points", s.K.size()}};
    write_json(dir / "scene.json", meta);
    res.files.insert(res.files.end(), {rel(dir / "g.bin", out), rel(dir / "g.json", out), rel(dir / "scene.json", out)});
    if (e.spec.mode == SceneMode::Exact) {
      std::ostringstream os;
      write_csv(os, s.K);
      write_text(dir / "K.csv", os.str());
      res.files.push_back(rel(dir / "K.csv", out));
    }
    res.messages.push_back("generated " + e.spec.name);
  }
  return res;
}

StepResult cmd_solve(const RunConfig& c, const fs::path& out) {
  StepResult res;
  for (const SceneEntry& e : c.scenes) {
    const Scene scene = read_scene(e, out);
    PhaseFieldState st;
    DiscreteSet K;
    if (e.spec.mode == SceneMode::Exact) {
      st = exact_state(scene);
      st.gauge_constant = scene.gauge_constant;
      K = scene.K;
    } else {
      const double eps = c.solver.epsilon > 0.0 ? c.solver.epsilon : 2.0 * scene.g.spacing;
      st = at_minimize(scene, eps, c.solver.fidelity, c.solver.iters, c.solver.options);
      K = extract_singular_set(st, c.solver.threshold);
    }
    double rise = 0.0;
    for (std::size_t i = 1; i < st.energy_trace.size(); ++i)
      rise = std::max(rise, st.energy_trace[i] - st.energy_trace[i - 1]);
    const fs::path dir = out / "states" / e.spec.name;
    fs::create_directories(dir);
    write_grid(st.u, (dir / "u").string());
    write_grid(st.v, (dir / "v").string());
    std::ostringstream os;
    write_csv(os, K);
    write_text(dir / "K.csv", os.str());
    json meta{{"scene", e.spec.name},
              {"mode", e.spec.mode == SceneMode::Exact ? "exact" : "phase_field"},
              {"epsilon", st.epsilon},
              {"fidelity", st.fidelity},
              {"eta", st.eta},
              {"iterations", st.iterations},
              {"cg_iterations", st.cg_iterations},
              {"max_residual", st.max_residual},
              {"gauge_constant", st.gauge_constant},
              {"energy_trace", st.energy_trace},
              {"max_energy_rise", rise},
              {"u_min", st.u.min()},
              {"u_max", st.u.max()},
              {"K_spacing", K.spacing},
              {"K_points", K.size()}};
    write_json(dir / "state.json", meta);
    for (const char* f : {"u.bin", "u.json", "v.bin", "v.json", "K.csv", "state.json"})
      res.files.push_back(rel(dir / f, out));
    res.messages.push_back("solved " + e.spec.name + ": " + std::to_string(K.size()) + " singular points");
  }
  return res;
}

StepResult cmd_analyze(const RunConfig& c, const fs::path& out) {
  StepResult res;
  const fs::path dir = out / "sweeps";
  for (const SceneEntry& e : c.scenes) {
    const StateFiles st = read_state(e, out);
    const GaugeSpec gauge = resolve_gauge(e.gauge, st.meta.at("gauge_constant").get<double>());
    const auto centers = centers_of(e);
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const std::string stem = sweep_stem(e.spec.name, i);
      ScaleSweep s;
      try {
        s = scale_sweep(e.spec.name, st.u, st.K, gauge, centers[i], e.r0, e.sweep);
      } catch (const std::invalid_argument& ex) {
        throw std::runtime_error("analyze " + stem + ": " + ex.what());
      }
      json sj;
      to_json(sj, s);
      write_json(dir / (stem + ".json"), sj);
      std::ostringstream csv, plot;
      write_sweep_csv(csv, s);
      write_beta_plot_csv(plot, s);
      write_text(dir / (stem + ".csv"), csv.str());
      write_text(dir / (stem + "_beta.csv"), plot.str());
      res.files.insert(res.files.end(), {rel(dir / (stem + ".json"), out), rel(dir / (stem + ".csv"), out),
                                         rel(dir / (stem + "_beta.csv"), out)});
      if (wants(e, "energy_smallness", std::nullopt)) {
        const EnergySmallnessReport r = energy_smallness_check(st.u, st.K, centers[i], e.r0, c.checks.a0,
                                                               c.checks.eta2, c.checks.eps3, e.sweep.params.fit);
        json rj;
        to_json(rj, r);
        write_json(dir / (stem + "_smallness.json"), rj);
        res.files.push_back(rel(dir / (stem + "_smallness.json"), out));
      }
      res.messages.push_back("analyzed " + stem + ": " + std::to_string(s.levels.size()) + " levels");
    }
  }
  return res;
}

StepResult cmd_verify(const RunConfig& c, const fs::path& out, const VerifyOptions& v) {
  StepResult res;
  if (v.only_check && *v.only_check != "jump_lower_bound" &&
      std::find(check_names().begin(), check_names().end(), *v.only_check) == check_names().end())
    throw ConfigError("unknown check '" + *v.only_check + "'");
  const fs::path baseline_path = v.baseline.empty() ? out / "baseline.json" : v.baseline;
  Baseline baseline;
  if (!v.init_baseline) {
    if (!fs::exists(baseline_path)) {
      res.exit_code = kExitMissingInput;
      res.messages.push_back("missing baseline " + baseline_path.string() + " (rerun with --init-baseline to write one)");
      return res;
    }
    try {
      baseline = baseline_from_json(read_json(baseline_path));
    } catch (const std::invalid_argument& ex) {
      throw ConfigError("baseline " + baseline_path.string() + ": " + ex.what());
    }
  }

  const CheckOptions& opt = c.checks.options;
  json entries = json::array();
  Baseline fitted;
  std::vector<ScaleSweep> all;
  bool pass = true;
  for (const SceneEntry& e : c.scenes) {
    const auto centers = centers_of(e);
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const std::string stem = sweep_stem(e.spec.name, i);
      json job{{"scene", e.spec.name}, {"center", i}, {"checks", json::array()}};
      auto record = [&](json entry) {
        pass = pass && entry.at("pass").get<bool>();
        job["checks"].push_back(entry);
        json brief{{"scene", e.spec.name}, {"center", i}, {"check", entry.at("name")}, {"pass", entry.at("pass")}};
        for (const char* k : {"C", "value", "baseline", "regression", "partial", "error"}) {
          if (entry.contains(k)) brief[k] = entry.at(k);
        }
        entries.push_back(brief);
      };
      const fs::path sweep_path = out / "sweeps" / (stem + ".json");
      require(sweep_path, "scene '" + e.spec.name + "' has not been analyzed");
      ScaleSweep s;
      try {
        s = sweep_from_json(read_json(sweep_path));
      } catch (const std::exception& ex) {
        // an unreadable sweep fails every check it was meant to feed
        for (const std::string& name : e.checks) {
          if (!v.only_check || *v.only_check == name)
            record({{"name", name}, {"pass", false}, {"error", std::string("corrupt sweep: ") + ex.what()}});
        }
        write_json(out / "checks" / (stem + ".json"), job);
        res.files.push_back(rel(out / "checks" / (stem + ".json"), out));
        continue;
      }
      all.push_back(s);
      for (const std::string& name : lemma_check_names()) {
        if (!wants(e, name, v.only_check)) continue;
        LemmaCheck lc;
        if (name == "jump_stability") lc = check_jump_stability(s, opt);
        else if (name == "jump_growth") lc = check_jump_growth(s, opt);
        else if (name == "energy_decay") lc = check_energy_decay(s, opt);
        else lc = check_bad_mass_bound(s, opt, name == "bad_mass_bound_wall");
        json entry;
        to_json(entry, lc);
        entry["C"] = number_or_null(lc.C);
        const std::string key = stem + "/" + name;
        if (std::isfinite(lc.C)) fitted.constants[key] = lc.C;
        if (!v.init_baseline) {
          const BaselineComparison cmp = compare_to_baseline(baseline, key, lc.C);
          entry["baseline"] = cmp.known ? json(cmp.baseline) : json(nullptr);
          entry["regression"] = cmp.regression;
          if (cmp.regression) entry["pass"] = false;
        }
        record(entry);
      }
      if (wants(e, "beta_exponent", v.only_check)) {
        json entry{{"name", "beta_exponent"}};
        try {
          const BetaExponentFit f = fit_beta_exponent(s);
          to_json(entry["fit"], f);
          entry["value"] = f.alpha;
          entry["pass"] = f.alpha > c.checks.alpha_min && f.residual < c.checks.residual_max;
        } catch (const std::invalid_argument& ex) {
          entry["error"] = ex.what();
          entry["pass"] = false;
        }
        record(entry);
      }
      if (wants(e, "self_improvement", v.only_check)) {
        const SelfImprovementReport r = check_self_improvement(s, c.checks.tau, opt.a);
        json entry{{"name", "self_improvement"}};
        to_json(entry["report"], r);
        entry["value"] = r.deepest;
        entry["pass"] = !r.applicable || r.reached_floor;
        record(entry);
      }
      if (wants(e, "energy_smallness", v.only_check)) {
        const json r = read_json(out / "sweeps" / (stem + "_smallness.json"));
        const bool applicable = r.at("applicable").get<bool>();
        json entry{{"name", "energy_smallness"}, {"report", r}, {"value", r.at("omega2")}};
        entry["pass"] = !applicable || r.at("pass").get<bool>();
        record(entry);
      }
      write_json(out / "checks" / (stem + ".json"), job);
      res.files.push_back(rel(out / "checks" / (stem + ".json"), out));
    }
  }

  json summary{{"version", 1}, {"baseline", v.init_baseline ? "initialized" : "compared"}, {"entries", entries}};
  if (c.checks.jump_lower_bound && (!v.only_check || *v.only_check == "jump_lower_bound")) {
    const JumpLowerBoundReport r = jump_lower_bound_check(all, c.checks.eps3);
    to_json(summary["jump_lower_bound"], r);
    pass = pass && r.pass;
  }
  json failures = json::array();
  for (const json& en : entries) {
    if (!en.at("pass").get<bool>()) failures.push_back(en.at("scene").get<std::string>() + "_c" +
                                                       std::to_string(en.at("center").get<int>()) + "/" +
                                                       en.at("check").get<std::string>());
  }
  if (summary.contains("jump_lower_bound") && !summary["jump_lower_bound"].at("pass").get<bool>())
    failures.push_back("jump_lower_bound");
  summary["failures"] = failures;
  summary["pass"] = pass;
  write_json(out / "summary.json", summary);
  res.files.push_back("summary.json");
  if (v.init_baseline) {
    json bj;
    to_json(bj, fitted);
    write_json(baseline_path, bj);
    res.messages.push_back("wrote baseline " + baseline_path.string() + " with " +
                           std::to_string(fitted.constants.size()) + " constants");
  }
  for (const json& f : failures) res.messages.push_back("FAIL " + f.get<std::string>());
  if (!pass) res.exit_code = kExitCheckFailure;
  return res;
}

StepResult cmd_report(const fs::path& out) {
  StepResult res;
  const json s = read_json(out / "summary.json");
  std::ostringstream md;
  md << "# Verification report\n\n";
  md << "Overall: " << (s.at("pass").get<bool>() ? "PASS" : "FAIL") << " (baseline "
     << s.at("baseline").get<std::string>() << ")\n\n";
  md << "| scene | centre | check | C | value | baseline | status |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const json& e : s.at("entries")) {
    std::string status = e.at("pass").get<bool>() ? "pass" : "FAIL";
    if (e.value("regression", false)) status += " (regression)";
    if (e.value("partial", false)) status += " (partial)";
    md << "| " << e.at("scene").get<std::string>() << " | " << e.at("center").get<int>() << " | "
       << e.at("check").get<std::string>() << " | " << fmt(e.value("C", json(nullptr))) << " | "
       << fmt(e.value("value", json(nullptr))) << " | " << fmt(e.value("baseline", json(nullptr))) << " | " << status
       << " |\n";
  }
  if (s.contains("jump_lower_bound")) {
    const json& j = s.at("jump_lower_bound");
    md << "\nJump lower bound: " << j.at("qualifying").get<int>() << " of " << j.at("sites").get<int>()
       << " levels qualify, min J = " << fmt(j.at("min_J")) << ", " << (j.at("pass").get<bool>() ? "pass" : "FAIL")
       << "\n";
  }
  write_text(out / "report.md", md.str());
  res.files.push_back("report.md");
  res.messages.push_back(md.str());
  return res;
}

}  // namespace mslab
