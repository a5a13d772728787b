#include "doctest.h"

#include "mslab/decay_lab.hpp"
#include "mslab/phase_field.hpp"
#include "mslab/scene.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace mslab;

namespace {

SceneSpec exact_spec(ConeKind kind, int grid, std::vector<double> contrasts = {}) {
  SceneSpec s;
  s.mode = SceneMode::Exact;
  s.kind = kind;
  s.grid = grid;
  s.orientation = rotation_from_axis_angle(Vec3(0.3, -0.2, 0.15));
  s.contrasts = std::move(contrasts);
  return s;
}

ScaleSweep sweep_of(const SceneSpec& spec, const GaugeSpec& gauge = GaugeSpec::zero(), int levels = 4) {
  const Scene sc = make_scene(spec);
  SweepOptions opt;
  opt.levels = levels;
  opt.floor_spacings = 2.0;
  return scale_sweep(spec.name, sc.g, sc.K, gauge, spec.apex, 0.4, opt);
}

// Synthetic ladder with every quantity given per radius.
ScaleSweep synthetic(const std::vector<double>& radii, double r0 = 1.0) {
  ScaleSweep s;
  s.scene = "synthetic";
  s.r0 = r0;
  for (double r : radii) {
    ScaleLevel l;
    l.r = r;
    l.jump_status = JumpStatus::Defined;
    l.J = 1.0 / std::sqrt(r);
    s.levels.push_back(l);
  }
  return s;
}

std::vector<double> dyadic(double r0, int n) {
  std::vector<double> r;
  for (int k = 0; k < n; ++k) r.push_back(std::ldexp(r0, -k));
  return r;
}

}  // namespace

TEST_CASE("tilde gauge closed form") {
  CHECK(tilde_gauge(GaugeSpec::zero(), 1.0, 0.5, 0.3) == 0.0);
  // h(s) = s, b = 1: (t/s) s = t for every s.
  for (double t : {0.01, 0.2, 0.7}) CHECK(std::abs(tilde_gauge(GaugeSpec::linear(1.0), 1.0, 1.0, t) - t) < 1e-15);
  // t beyond r: only s = t remains.
  CHECK(tilde_gauge(GaugeSpec::linear(3.0), 0.5, 0.4, 0.8) == doctest::Approx(2.4));
  CHECK_THROWS_AS(tilde_gauge(GaugeSpec::linear(1.0), 1.0, 0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(tilde_gauge(GaugeSpec::linear(1.0), 1.0, 0.5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(GaugeSpec::linear(-1.0).validate(), std::invalid_argument);
}

TEST_CASE("tilde gauge against a brute-force supremum") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const GaugeSpec h = GaugeSpec::linear(10.0 * U(rng));
    const double r = 0.05 + U(rng);
    const double b = 0.05 + 2.0 * U(rng);
    const double t = r * (0.01 + 0.99 * U(rng));
    const double ht = tilde_gauge(h, r, b, t);
    double brute = 0.0;
    for (int i = 0; i <= 400; ++i) {
      const double s = t + (r - t) * i / 400.0;
      brute = std::max(brute, std::pow(t / s, b) * h(s));
    }
    CHECK(ht >= brute * (1.0 - 1e-12));
    CHECK(ht <= brute * (1.0 + 1e-12));
    CHECK(ht >= h(t));
    // Monotone in t.
    const double t2 = t + (r - t) * U(rng);
    CHECK(tilde_gauge(h, r, b, t2) >= ht * (1.0 - 1e-12));
    // a^b = 1/2 halves at most.
    const double a = std::pow(0.5, 1.0 / b);
    CHECK(tilde_gauge(h, r, b, a * t) >= 0.5 * ht * (1.0 - 1e-12));
  }
}

TEST_CASE("beta exponent fit") {
  SUBCASE("exact power law") {
    for (double alpha : {0.5, 1.0, 0.17}) {
      ScaleSweep s = synthetic(dyadic(0.4, 6), 0.4);
      for (ScaleLevel& l : s.levels) l.beta = 0.3 * std::pow(l.r / 0.4, alpha);
      const BetaExponentFit f = fit_beta_exponent(s);
      CHECK(std::abs(f.alpha - alpha) < 1e-6);
      CHECK(std::abs(f.prefactor - 0.3) < 1e-9);
      CHECK(f.residual < 1e-9);
      CHECK(f.levels == 6);
    }
  }
  SUBCASE("flat beta") {
    ScaleSweep s = synthetic(dyadic(1.0, 5));
    for (ScaleLevel& l : s.levels) l.beta = 0.02;
    CHECK(std::abs(fit_beta_exponent(s).alpha) < 1e-12);
  }
  SUBCASE("levels below the floor or with beta = 0 are ignored") {
    ScaleSweep s = synthetic(dyadic(1.0, 6));
    for (ScaleLevel& l : s.levels) l.beta = l.r;
    s.levels[1].beta = 0.0;
    s.floor = 0.1;  // drops 1/16 and 1/32
    CHECK_THROWS_AS(fit_beta_exponent(s), std::invalid_argument);
    s.floor = 0.05;
    const BetaExponentFit f = fit_beta_exponent(s);
    CHECK(f.levels == 4);
    CHECK(std::abs(f.alpha - 1.0) < 1e-12);
  }
}

TEST_CASE("lemma check constant fitting") {
  LemmaCheck c;
  c.cap = 10.0;
  c.terms = {{1.0, 0.5, 3.0, 1.0, 0.5}, {0.5, 0.25, 0.5, 0.0, 1.0}, {0.25, 0.1, 0.1, 0.2, 0.0}};
  finish_check(c);
  CHECK(c.C == doctest::Approx(4.0));
  CHECK(c.pass);
  c.cap = 3.0;
  finish_check(c);
  CHECK_FALSE(c.pass);
  c.terms.push_back({0.1, 0.05, 1.0, 0.0, 0.0});
  finish_check(c);
  CHECK(std::isinf(c.C));
  CHECK_FALSE(c.pass);
  c.tolerance = 1.5;
  c.terms.pop_back();
  finish_check(c);
  CHECK(c.C == doctest::Approx(1.0));

  CheckOptions bad;
  bad.a = 0.3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.a = 0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.a = 0.25;
  bad.gamma = 0.4;  // 2 a^gamma > 1
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("sweep of an exact plane") {
  const SceneSpec spec = exact_spec(ConeKind::P, 48, {0.0, 1.0});
  const ScaleSweep s = sweep_of(spec);
  REQUIRE(s.levels.size() == 4);
  REQUIRE(s.inner.size() == 3);  // 0.0375 is below the floor 2/48
  for (std::size_t i = 0; i < s.levels.size(); ++i) {
    const ScaleLevel& l = s.levels[i];
    CHECK(l.r == doctest::Approx(0.4 / std::pow(2.0, i)));
    CHECK(l.beta <= 5e-2);
    CHECK(l.kind == ConeKind::P);
    CHECK(l.jump_defined());
    CHECK(std::abs(l.J - 1.0 / std::sqrt(l.r)) < 1e-9);
    CHECK(l.omega2 == 0.0);
    CHECK(l.m == 0.0);
    CHECK(l.h == 0.0);
  }
  CHECK(s.bad_balls == 0);

  // Piecewise constant, h = 0: every constant vanishes.
  for (const LemmaCheck& c : {check_jump_stability(s), check_jump_growth(s), check_energy_decay(s), check_bad_mass_bound(s)}) {
    CAPTURE(c.name);
    CHECK(c.pass);
    CHECK(c.C == 0.0);
    CHECK_FALSE(c.partial);
    for (const LemmaTerm& t : c.terms) CHECK(t.lhs <= t.base + 1e-6);
  }
  CHECK(check_energy_decay(s).terms.size() == 2);  // a = 1/4 pairs two levels apart
  CHECK(check_jump_growth(s).terms.size() == 21);  // all pairs of 7 radii
}

TEST_CASE("sweep fits the T cone at the T point") {
  const ScaleSweep s = sweep_of(exact_spec(ConeKind::T, 40), GaugeSpec::zero(), 2);
  CHECK(s.levels[0].kind == ConeKind::T);
  CHECK(s.levels[0].beta <= 4e-2);
  CHECK(std::abs(s.levels[0].f) < 0.1);
}

TEST_CASE("sweep of a step with a smooth background") {
  SceneSpec spec = exact_spec(ConeKind::P, 48, {0.0, 1.0});
  spec.gradient = Vec3(0.4, -0.3, 0.2);
  const ScaleSweep s = sweep_of(spec);
  for (const ScaleLevel& l : s.levels) {
    // |grad u|^2 = 0.29 on the ball minus the excluded slab around K.
    CHECK(l.omega2 > 0.0);
    CHECK(l.omega2 < 0.29 * 4.0 / 3.0 * M_PI * l.r * 1.001);
  }
  const LemmaCheck st = check_jump_stability(s);
  CHECK(st.pass);
  CHECK(std::isfinite(st.C));
  CHECK(check_jump_growth(s).pass);
  CHECK(check_energy_decay(s).pass);

  // A large gauge dominates the decay right-hand side.
  const ScaleSweep g = sweep_of(spec, GaugeSpec::linear(1e3));
  const LemmaCheck dec = check_energy_decay(g);
  CHECK(dec.pass);
  CHECK(dec.C < check_energy_decay(s).C + 1e-12);
  for (const LemmaTerm& t : dec.terms) CHECK(t.rhs >= 1e3 * t.r / 16.0);
}

TEST_CASE("undefined jumps make a check partial") {
  ScaleSweep s = synthetic(dyadic(0.4, 4), 0.4);
  s.inner = synthetic({0.3, 0.15, 0.075}, 0.4).levels;
  for (ScaleLevel& l : s.levels) l.omega2 = 1e-4;
  CHECK_FALSE(check_jump_stability(s).partial);
  CHECK(check_jump_stability(s).C == 0.0);
  s.inner[1].jump_status = JumpStatus::SingleComponent;
  s.inner[1].J = kUndefined;
  const LemmaCheck c = check_jump_stability(s);
  CHECK(c.partial);
  CHECK(c.skipped == 1);
  CHECK(c.terms.size() == 2);
  s.levels[0].jump_status = JumpStatus::OffCenter;
  s.levels[0].J = kUndefined;
  const LemmaCheck d = check_energy_decay(s);
  CHECK(d.partial);
  CHECK(d.terms.size() == 2);
  // Degenerate pair r1 = r in the growth check reduces to 0 <= C'.
  const LemmaCheck g = check_jump_growth(s);
  CHECK(g.pass);
}

TEST_CASE("bad mass of a one-bump sweep") {
  SceneSpec spec;
  spec.mode = SceneMode::Exact;
  spec.kind = ConeKind::P;
  spec.grid = 64;
  spec.bumps = {{Vec3(0.6, 0.5, 0.5), 0.08}};
  const Scene sc = make_scene(spec);
  SweepOptions opt;
  opt.levels = 3;
  const ScaleSweep s = scale_sweep("bump", sc.g, sc.K, GaugeSpec::linear(1.0), spec.apex, 0.4, opt);
  REQUIRE(s.bad_balls == 1);
  const double radius = s.sqrt_eps * s.r0;
  for (const ScaleLevel& l : s.levels) {
    // The ball sits 0.1 from x with radius >= 0.1: it meets every level.
    CHECK(l.m == doctest::Approx(radius * radius / (l.r * l.r)));
  }
  const LemmaCheck c = check_bad_mass_bound(s);
  CHECK(std::isfinite(c.C));
  CHECK(c.C > 0.0);
  const LemmaCheck w = check_bad_mass_bound(s, {}, true);
  CHECK(w.C <= c.C);
  // With h = 0 and omega2 = 0 the right-hand side vanishes.
  const ScaleSweep z = scale_sweep("bump", sc.g, sc.K, GaugeSpec::zero(), spec.apex, 0.4, opt);
  CHECK(std::isinf(check_bad_mass_bound(z).C));
}

TEST_CASE("self-improvement walk") {
  SUBCASE("high-contrast exact plane propagates to the floor") {
    const ScaleSweep s = sweep_of(exact_spec(ConeKind::P, 48, {0.0, 1000.0}), GaugeSpec::zero(), 5);
    REQUIRE(s.levels.size() == 4);
    const SelfImprovementReport r = check_self_improvement(s, {1e-1, 5e-2, 1e-2, 1e-3});
    CHECK(r.applicable);
    CHECK(r.reached_floor);
    CHECK(r.violated == SmallnessClause::None);
    CHECK(r.deepest == doctest::Approx(0.1));
    CHECK(r.steps == 1);
  }
  SUBCASE("clauses in order") {
    ScaleSweep s = synthetic(dyadic(1.0, 5));
    for (ScaleLevel& l : s.levels) l.J = 1e4;
    const std::array<double, 4> tau{1e-1, 5e-2, 1e-2, 1e-3};
    s.levels[0].beta = 0.2;
    CHECK_FALSE(check_self_improvement(s, tau).applicable);
    CHECK(check_self_improvement(s, tau).violated == SmallnessClause::Beta);
    s.levels[0].beta = 0.0;
    s.levels[2].m = 0.06;
    SelfImprovementReport r = check_self_improvement(s, tau);
    CHECK(r.applicable);
    CHECK(r.violated == SmallnessClause::BadMass);
    CHECK(r.violated_at == 0.25);
    CHECK(r.deepest == 1.0);
    s.levels[2].omega2 = 0.02;
    CHECK(check_self_improvement(s, tau).violated == SmallnessClause::Energy);
    s.levels[2].h = 1.0;
    CHECK(check_self_improvement(s, tau).violated == SmallnessClause::GaugeJump);
    // a = 1/2 walks every level.
    s.levels[2].m = s.levels[2].omega2 = s.levels[2].h = 0.0;
    s.levels[3].jump_status = JumpStatus::SingleComponent;
    s.levels[3].J = kUndefined;
    r = check_self_improvement(s, tau, 0.5);
    CHECK(r.violated == SmallnessClause::GaugeJump);
    CHECK(r.deepest == 0.25);
  }
  SUBCASE("thresholds must be ordered") {
    const ScaleSweep s = synthetic(dyadic(1.0, 3));
    CHECK_THROWS_AS(check_self_improvement(s, {1e-2, 5e-2, 1e-2, 1e-3}), std::invalid_argument);
    CHECK_THROWS_AS(check_self_improvement(s, {1e-1, 5e-2, 1e-2, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(check_self_improvement(s, {1e-1, 5e-2, 1e-2, 1e-3}, 0.3), std::invalid_argument);
  }
}

TEST_CASE("jump lower bound over sweeps") {
  ScaleSweep a = synthetic(dyadic(1.0, 4));
  ScaleSweep b = synthetic(dyadic(1.0, 4));
  b.levels[0].beta = 0.5;  // fails the smallness clause
  b.levels[1].jump_status = JumpStatus::OffCenter;
  b.levels[1].J = kUndefined;
  JumpLowerBoundReport r = jump_lower_bound_check({a, b}, 0.1);
  CHECK(r.sites == 8);
  CHECK(r.qualifying == 7);
  CHECK(r.undefined == 1);
  CHECK(r.min_J == doctest::Approx(1.0));
  CHECK(r.pass);
  a.levels[3].J = 0.0;
  r = jump_lower_bound_check({a, b}, 0.1);
  CHECK_FALSE(r.pass);
  CHECK(r.min_J == 0.0);
  // Nothing qualifies: vacuous pass.
  for (ScaleLevel& l : a.levels) l.omega2 = 1.0;
  r = jump_lower_bound_check({a}, 0.1);
  CHECK(r.qualifying == 0);
  CHECK(r.pass);
}

TEST_CASE("energy smallness") {
  SceneSpec spec = exact_spec(ConeKind::P, 48, {0.0, 1.0});
  Scene sc = make_scene(spec);
  EnergySmallnessReport r = energy_smallness_check(sc.g, sc.K, spec.apex, 0.4, 0.25, 0.1, 0.1);
  CHECK(r.applicable);
  CHECK(r.distance < 0.05);
  CHECK(r.omega2 == 0.0);
  CHECK(r.pass);

  spec.gradient = Vec3(1.0, 0.5, 0.0);
  sc = make_scene(spec);
  r = energy_smallness_check(sc.g, sc.K, spec.apex, 0.4, 0.25, 0.1, 0.1);
  CHECK(r.applicable);
  // |grad u|^2 = 1.25 over B(x, 0.1) minus the excluded slab |z| <= 2/48.
  const double R = 0.1, w = 2.0 / 48.0;
  const double oracle = 1.25 * (4.0 / 3.0 * M_PI * R * R * R - 2.0 * M_PI * (R * R * w - w * w * w / 3.0)) / (R * R);
  CHECK(std::abs(r.omega2 - oracle) < 0.15 * oracle);
  CHECK_FALSE(r.pass);

  // K of a plane against a much tighter distance bound.
  r = energy_smallness_check(sc.g, sc.K, spec.apex, 0.4, 0.25, 0.1, 1e-6);
  CHECK_FALSE(r.applicable);
  CHECK_FALSE(r.pass);
}

TEST_CASE("sweep preconditions") {
  SceneSpec spec = exact_spec(ConeKind::P, 24, {0.7, 0.7});
  const Scene sc = make_scene(spec);
  CHECK_THROWS_AS(scale_sweep("x", sc.g, DiscreteSet{}, GaugeSpec::zero(), spec.apex, 0.4), std::invalid_argument);
  CHECK_THROWS_AS(scale_sweep("x", sc.g, sc.K, GaugeSpec::zero(), spec.apex, 0.6), std::invalid_argument);
  CHECK_THROWS_AS(scale_sweep("x", sc.g, sc.K, GaugeSpec::zero(), spec.apex, 0.05), std::invalid_argument);

  ScaleSweep s = synthetic({1.0, 0.5, 0.5});
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = synthetic({1.0, 0.5});
  s.levels[1].omega2 = std::nan("");
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("sweep serialization and determinism") {
  const SceneSpec spec = exact_spec(ConeKind::Y, 40, {0.0, 1.0, 3.0});
  const ScaleSweep a = sweep_of(spec, GaugeSpec::linear(2.0), 3);
  const ScaleSweep b = sweep_of(spec, GaugeSpec::linear(2.0), 3);
  const std::string ja = nlohmann::json(a).dump();
  CHECK(ja == nlohmann::json(b).dump());
  const ScaleSweep back = sweep_from_json(nlohmann::json::parse(ja));
  CHECK(nlohmann::json(back).dump() == ja);

  ScaleSweep u = a;
  u.levels[1].jump_status = JumpStatus::SingleComponent;
  u.levels[1].J = kUndefined;
  const nlohmann::json ju = u;
  CHECK(ju["levels"][1]["J"].is_null());
  CHECK(std::isnan(sweep_from_json(ju).levels[1].J));
  nlohmann::json broken = ju;
  broken["levels"][1]["jump_status"] = "defined";
  CHECK_THROWS_AS(sweep_from_json(broken), std::invalid_argument);

  std::ostringstream csv;
  write_sweep_csv(csv, u);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "r,beta,omega2,J,m,f,h,kind");
  std::getline(in, line);
  std::getline(in, line);
  CHECK(line.find(",,") != std::string::npos);  // undefined J left empty
  std::ostringstream plot;
  write_beta_plot_csv(plot, a);
  CHECK(plot.str().rfind("log_r,log_beta\n", 0) == 0);
}

TEST_CASE("baseline comparison") {
  Baseline b;
  b.constants = {{"plane/jump_stability", 0.05}, {"y/energy_decay", 0.0}};
  CHECK_FALSE(compare_to_baseline(b, "plane/jump_stability", 0.1).regression);
  CHECK(compare_to_baseline(b, "plane/jump_stability", 0.1000001).regression);
  CHECK_FALSE(compare_to_baseline(b, "y/energy_decay", 2e-6).regression);
  CHECK(compare_to_baseline(b, "y/energy_decay", 3e-6).regression);
  CHECK(compare_to_baseline(b, "y/energy_decay", std::numeric_limits<double>::infinity()).regression);
  const BaselineComparison unknown = compare_to_baseline(b, "t/energy_decay", 1e3);
  CHECK_FALSE(unknown.known);
  CHECK_FALSE(unknown.regression);

  const Baseline back = baseline_from_json(nlohmann::json(b));
  CHECK(back.constants == b.constants);
  CHECK_THROWS_AS(baseline_from_json(nlohmann::json{{"version", 2}, {"constants", {}}}), std::invalid_argument);
  CHECK_THROWS_AS(baseline_from_json(nlohmann::json{{"version", 1}, {"constants", {{"a", -1.0}}}}), std::invalid_argument);
}
