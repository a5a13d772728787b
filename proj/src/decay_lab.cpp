#include "mslab/decay_lab.hpp"

#include "mslab/phase_field.hpp"
#include "mslab/set_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace mslab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// a = 2^-k, k >= 1; returns k or 0.
int dyadic_steps(double a) {
  if (!(a > 0.0 && a < 1.0)) return 0;
  const double k = std::round(-std::log2(a));
  if (k < 1.0 || std::abs(std::ldexp(1.0, -static_cast<int>(k)) - a) > 1e-12 * a) return 0;
  return static_cast<int>(k);
}

JumpStatus parse_jump_status(const std::string& s) {
  for (JumpStatus st : {JumpStatus::Defined, JumpStatus::SingleComponent, JumpStatus::BetaTooLarge,
                        JumpStatus::OffCenter, JumpStatus::OutsideGrid})
    if (to_string(st) == s) return st;
  throw std::invalid_argument("sweep: unknown jump status '" + s + "'");
}

nlohmann::json number_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
double number_or_nan(const nlohmann::json& j) { return j.is_null() ? kUndefined : j.get<double>(); }

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ScaleLevel evaluate_level(const ScalarGrid& u, const DiscreteSet& K, const GaugeSpec& gauge, const Vec3& x, double r,
                          const SweepOptions& opt) {
  const Ball B(x, r);
  const ConeFit fit = fit_cone(K, B, {ConeKind::P, ConeKind::Y, ConeKind::T}, x, opt.params.fit);
  ScaleLevel l;
  l.r = r;
  l.beta = fit.beta;
  l.kind = fit.cone.kind();
  l.omega2 = normalized_energy(u, K, B);
  JumpOptions jo = opt.jump;
  jo.fit = opt.params.fit;
  const JumpReport jr = jump(u, K, B, fit, jo);
  l.jump_status = jr.status;
  l.fallback = jr.fallback;
  if (jr.defined()) l.J = jr.J;
  l.h = gauge(r);
  if (fit.beta > 0.0 && fit.beta < 0.1) l.wall = boundary_wall(B, fit.cone, fit.beta) / (r * r);
  return l;
}

bool finite_level(const ScaleLevel& l) {
  return std::isfinite(l.r) && std::isfinite(l.beta) && std::isfinite(l.omega2) && std::isfinite(l.m) &&
         std::isfinite(l.f) && std::isfinite(l.h) && (std::isnan(l.J) || std::isfinite(l.J)) &&
         (std::isnan(l.wall) || std::isfinite(l.wall));
}

}  // namespace

void GaugeSpec::validate() const {
  if (!(std::isfinite(constant) && constant >= 0.0)) throw std::invalid_argument("gauge: constant must be finite and >= 0");
}

double tilde_gauge(const GaugeSpec& h, double r, double b, double t) {
  if (!(t > 0.0 && b > 0.0)) throw std::invalid_argument("tilde_gauge: need t > 0 and b > 0");
  if (h.form == GaugeSpec::Form::Zero) return 0.0;
  const double top = std::max(t, r);
  // (t/s)^b c s = c t^b s^(1-b)
  return std::max(h(t), std::pow(t / top, b) * h(top));
}

void ScaleSweep::validate() const {
  if (levels.empty()) throw std::invalid_argument("sweep: no levels");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!finite_level(levels[i])) throw std::invalid_argument("sweep: non-finite entry");
    if (i > 0 && !(levels[i].r < levels[i - 1].r)) throw std::invalid_argument("sweep: radii must strictly decrease");
  }
  if (inner.size() > levels.size()) throw std::invalid_argument("sweep: more inner levels than levels");
  for (std::size_t i = 0; i < inner.size(); ++i) {
    if (!finite_level(inner[i])) throw std::invalid_argument("sweep: non-finite entry");
    if (!(inner[i].r < levels[i].r)) throw std::invalid_argument("sweep: inner radius must be below its level");
  }
  if (!(std::isfinite(sqrt_eps) && sqrt_eps >= 0.0)) throw std::invalid_argument("sweep: bad sqrt_eps");
  gauge.validate();
}

ScaleSweep scale_sweep(const std::string& scene, const ScalarGrid& u, const DiscreteSet& K, const GaugeSpec& gauge,
                       const Vec3& x, double r0, const SweepOptions& opt) {
  gauge.validate();
  opt.params.validate();
  if (opt.levels < 1) throw std::invalid_argument("scale_sweep: need at least one level");
  const Ball B0(x, r0);
  if (!u.contains_ball(B0)) throw std::invalid_argument("scale_sweep: B(x, r0) leaves the grid");
  if (K.indices_in(B0).empty()) throw std::invalid_argument("scale_sweep: K does not meet B(x, r0)");

  ScaleSweep s;
  s.scene = scene;
  s.center = x;
  s.r0 = r0;
  s.gauge = gauge;
  s.floor = opt.floor_spacings * std::max(u.spacing, K.spacing);
  if (r0 < s.floor) throw std::invalid_argument("scale_sweep: r0 below the resolution floor");

  std::vector<double> radii;
  for (int k = 0; k < opt.levels; ++k) {
    const double r = std::ldexp(r0, -k);
    if (r < s.floor * (1.0 - 1e-12)) break;
    radii.push_back(r);
  }
  for (double r : radii) s.levels.push_back(evaluate_level(u, K, gauge, x, r, opt));
  for (double r : radii) {
    if (0.75 * r < s.floor * (1.0 - 1e-12)) break;
    s.inner.push_back(evaluate_level(u, K, gauge, x, 0.75 * r, opt));
  }

  const ConeKind ref = s.levels.back().kind;
  if (opt.bad_mass) {
    const StoppingDecomposition S = bad_balls(K, Ball(x, opt.bad_region_ratio * r0), opt.params,
                                              opt.bad_r_max_ratio * r0, no_surplus());
    s.bad_balls = S.balls.size();
    s.sqrt_eps = S.max_radius() / r0;
    for (ScaleLevel& l : s.levels) l.m = bad_mass(S, Ball(x, l.r));
    for (ScaleLevel& l : s.inner) l.m = bad_mass(S, Ball(x, l.r));
  }
  for (ScaleLevel& l : s.levels) l.f = excess_density(K, x, l.r, ref);
  for (ScaleLevel& l : s.inner) l.f = excess_density(K, x, l.r, ref);
  s.validate();
  return s;
}

void finish_check(LemmaCheck& c) {
  double C = 0.0;
  for (const LemmaTerm& t : c.terms) {
    const double excess = t.lhs - t.base - c.tolerance;
    if (!(excess > 0.0)) continue;
    C = t.rhs > 0.0 ? std::max(C, excess / t.rhs) : kInf;
  }
  c.C = C;
  c.pass = C <= c.cap;
}

void CheckOptions::validate() const {
  if (!(stability_cap > 0.0 && growth_cap > 0.0 && decay_cap > 0.0 && bad_mass_cap > 0.0))
    throw std::invalid_argument("checks: caps must be positive");
  if (!(tolerance >= 0.0)) throw std::invalid_argument("checks: tolerance must be >= 0");
  if (dyadic_steps(a) < 2) throw std::invalid_argument("checks: a must be 2^-k with k >= 2");
  if (!(gamma > 0.0 && 2.0 * std::pow(a, gamma) < 1.0)) throw std::invalid_argument("checks: need 2 a^gamma < 1");
}

LemmaCheck check_jump_stability(const ScaleSweep& s, const CheckOptions& opt) {
  opt.validate();
  LemmaCheck c;
  c.name = "jump_stability";
  c.cap = opt.stability_cap;
  c.tolerance = opt.tolerance;
  for (std::size_t k = 0; k < s.inner.size(); ++k) {
    const ScaleLevel& L = s.levels[k];
    const ScaleLevel& I = s.inner[k];
    if (!L.jump_defined() || !I.jump_defined()) {
      ++c.skipped;
      continue;
    }
    c.terms.push_back({L.r, I.r, std::abs(std::sqrt(I.r / L.r) * I.J - L.J), 0.0, std::sqrt(L.omega2)});
  }
  c.partial = c.skipped > 0 || c.terms.empty();
  finish_check(c);
  return c;
}

LemmaCheck check_jump_growth(const ScaleSweep& s, const CheckOptions& opt) {
  opt.validate();
  LemmaCheck c;
  c.name = "jump_growth";
  c.cap = opt.growth_cap;
  c.tolerance = opt.tolerance;
  std::vector<const ScaleLevel*> all;
  for (const ScaleLevel& l : s.levels) all.push_back(&l);
  for (const ScaleLevel& l : s.inner) all.push_back(&l);
  std::stable_sort(all.begin(), all.end(), [](const ScaleLevel* a, const ScaleLevel* b) { return a->r > b->r; });
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      const ScaleLevel& L = *all[i];
      const ScaleLevel& S = *all[j];
      if (!L.jump_defined() || !S.jump_defined()) {
        ++c.skipped;
        continue;
      }
      c.terms.push_back({L.r, S.r, L.J - std::sqrt(S.r / L.r) * S.J, 0.0, 1.0 + L.h});
    }
  c.partial = c.skipped > 0 || c.terms.empty();
  finish_check(c);
  return c;
}

LemmaCheck check_energy_decay(const ScaleSweep& s, const CheckOptions& opt) {
  opt.validate();
  const int step = dyadic_steps(opt.a);
  LemmaCheck c;
  c.name = "energy_decay";
  c.cap = opt.decay_cap;
  c.tolerance = opt.tolerance;
  const double base = 2.0 * std::pow(opt.a, opt.gamma);
  for (std::size_t k = 0; k + step < s.levels.size(); ++k) {
    const ScaleLevel& L = s.levels[k];
    const ScaleLevel& S = s.levels[k + step];
    double rhs = s.sqrt_eps * L.m + L.h;
    if (L.jump_defined())
      rhs += L.J > 0.0 ? std::sqrt(L.omega2) / L.J : (L.omega2 > 0.0 ? kInf : 0.0);
    else
      ++c.skipped;
    c.terms.push_back({L.r, S.r, S.omega2, base * L.omega2, rhs / (opt.a * opt.a)});
  }
  c.partial = c.skipped > 0 || c.terms.empty();
  finish_check(c);
  return c;
}

LemmaCheck check_bad_mass_bound(const ScaleSweep& s, const CheckOptions& opt, bool with_wall) {
  opt.validate();
  LemmaCheck c;
  c.name = with_wall ? "bad_mass_bound_wall" : "bad_mass_bound";
  c.cap = opt.bad_mass_cap;
  c.tolerance = opt.tolerance;
  for (const ScaleLevel& L : s.levels) {
    double rhs = L.omega2 + L.h;
    if (L.jump_defined())
      rhs += L.J > 0.0 ? std::sqrt(L.omega2) / L.J : (L.omega2 > 0.0 ? kInf : 0.0);
    else
      ++c.skipped;
    if (with_wall) {
      if (std::isnan(L.wall))
        ++c.skipped;
      else
        rhs += L.wall;
    }
    c.terms.push_back({L.r, L.r, L.m, 0.0, rhs});
  }
  c.partial = c.skipped > 0 || c.terms.empty();
  finish_check(c);
  return c;
}

std::string_view to_string(SmallnessClause c) {
  switch (c) {
    case SmallnessClause::None: return "none";
    case SmallnessClause::GaugeJump: return "gauge_jump";
    case SmallnessClause::Energy: return "energy";
    case SmallnessClause::BadMass: return "bad_mass";
    case SmallnessClause::Beta: return "beta";
  }
  return "?";
}

SelfImprovementReport check_self_improvement(const ScaleSweep& s, const std::array<double, 4>& tau, double a) {
  if (!(0.0 < tau[3] && tau[3] < tau[2] && tau[2] < tau[1] && tau[1] < tau[0]))
    throw std::invalid_argument("self_improvement: need 0 < tau4 < tau3 < tau2 < tau1");
  const int step = dyadic_steps(a);
  if (step < 1) throw std::invalid_argument("self_improvement: a must be 2^-k");
  SelfImprovementReport rep;
  rep.tau = tau;
  rep.a = a;
  auto clause = [&](const ScaleLevel& l) {
    const double inv_j = l.jump_defined() && l.J > 0.0 ? 1.0 / l.J : kInf;
    if (!(l.h + inv_j <= tau[3])) return SmallnessClause::GaugeJump;
    if (!(l.omega2 <= tau[2])) return SmallnessClause::Energy;
    if (!(l.m <= tau[1])) return SmallnessClause::BadMass;
    if (!(l.beta <= tau[0])) return SmallnessClause::Beta;
    return SmallnessClause::None;
  };
  for (std::size_t k = 0; k < s.levels.size(); k += step) {
    const SmallnessClause cl = clause(s.levels[k]);
    if (cl != SmallnessClause::None) {
      rep.violated = cl;
      rep.violated_at = s.levels[k].r;
      return rep;
    }
    rep.applicable = true;
    rep.deepest = s.levels[k].r;
    rep.steps = k / step;
  }
  rep.reached_floor = true;
  return rep;
}

BetaExponentFit fit_beta_exponent(const ScaleSweep& s) {
  std::vector<double> xs, ys;
  for (const ScaleLevel& l : s.levels)
    if (l.r >= s.floor * (1.0 - 1e-12) && l.beta > 0.0 && std::isfinite(l.beta)) {
      xs.push_back(std::log(l.r / s.r0));
      ys.push_back(std::log(l.beta));
    }
  if (xs.size() < 4) throw std::invalid_argument("fit_beta_exponent: need at least 4 levels with beta > 0");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  BetaExponentFit f;
  f.levels = xs.size();
  f.alpha = sxy / sxx;
  const double c = my - f.alpha * mx;
  f.prefactor = std::exp(c);
  double ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (c + f.alpha * xs[i]);
    ss += e * e;
  }
  f.residual = std::sqrt(ss / n);
  return f;
}

JumpLowerBoundReport jump_lower_bound_check(const std::vector<ScaleSweep>& sweeps, double eps3) {
  if (!(eps3 > 0.0)) throw std::invalid_argument("jump_lower_bound_check: eps3 must be positive");
  JumpLowerBoundReport rep;
  rep.eps3 = eps3;
  for (const ScaleSweep& s : sweeps)
    for (const ScaleLevel& l : s.levels) {
      ++rep.sites;
      if (!(l.omega2 + l.h + l.beta <= eps3)) continue;
      ++rep.qualifying;
      if (!l.jump_defined()) {
        ++rep.undefined;
        continue;
      }
      rep.min_J = std::min(rep.min_J, l.J);
      if (!(l.J > 0.0)) rep.pass = false;
    }
  return rep;
}

EnergySmallnessReport energy_smallness_check(const ScalarGrid& u, const DiscreteSet& K, const Vec3& x, double r,
                                             double a0, double eta2, double eps3, const FitOptions& fit) {
  if (!(a0 > 0.0 && a0 < 1.0 && eta2 > 0.0 && eps3 > 0.0))
    throw std::invalid_argument("energy_smallness_check: need 0 < a0 < 1, eta2 > 0, eps3 > 0");
  EnergySmallnessReport rep;
  rep.a0 = a0;
  rep.eta2 = eta2;
  rep.eps3 = eps3;
  const Ball B(x, r);
  if (K.indices_in(B).empty()) return rep;
  const ConeFit cf = fit_cone(K, B, {ConeKind::P, ConeKind::Y, ConeKind::T}, x, fit);
  const std::optional<double> D = hausdorff(K, sample_cone(cf.cone, B, K.spacing), B);
  if (!D) return rep;
  rep.distance = *D;
  if (!(*D <= eps3)) return rep;
  rep.applicable = true;
  rep.omega2 = normalized_energy(u, K, Ball(x, a0 * r));
  rep.pass = rep.omega2 <= eta2;
  return rep;
}

BaselineComparison compare_to_baseline(const Baseline& b, const std::string& key, double C) {
  BaselineComparison cmp;
  cmp.key = key;
  cmp.C = C;
  const auto it = b.constants.find(key);
  if (it == b.constants.end()) return cmp;
  cmp.known = true;
  cmp.baseline = it->second;
  cmp.regression = !(C <= 2.0 * std::max(cmp.baseline, kBaselineFloor));
  return cmp;
}

void to_json(nlohmann::json& j, const GaugeSpec& g) {
  j = {{"form", g.form == GaugeSpec::Form::Zero ? "zero" : "linear"}, {"constant", g.constant}};
}

GaugeSpec gauge_from_json(const nlohmann::json& j) {
  GaugeSpec g;
  const std::string form = j.value("form", "zero");
  if (form == "zero")
    g.form = GaugeSpec::Form::Zero;
  else if (form == "linear")
    g.form = GaugeSpec::Form::Linear;
  else
    throw std::invalid_argument("gauge: unknown form '" + form + "'");
  g.constant = j.value("constant", 0.0);
  g.validate();
  return g;
}

void to_json(nlohmann::json& j, const ScaleLevel& l) {
  j = {{"r", l.r},
       {"beta", l.beta},
       {"kind", std::string(to_string(l.kind))},
       {"omega2", l.omega2},
       {"jump_status", std::string(to_string(l.jump_status))},
       {"J", number_or_null(l.J)},
       {"fallback", l.fallback},
       {"m", l.m},
       {"f", l.f},
       {"h", l.h},
       {"wall", number_or_null(l.wall)}};
}

namespace {
ScaleLevel level_from_json(const nlohmann::json& j) {
  ScaleLevel l;
  l.r = j.at("r").get<double>();
  l.beta = j.at("beta").get<double>();
  l.kind = parse_cone_kind(j.at("kind").get<std::string>());
  l.omega2 = j.at("omega2").get<double>();
  l.jump_status = parse_jump_status(j.at("jump_status").get<std::string>());
  l.J = number_or_nan(j.at("J"));
  l.fallback = j.value("fallback", 1);
  l.m = j.at("m").get<double>();
  l.f = j.at("f").get<double>();
  l.h = j.at("h").get<double>();
  l.wall = number_or_nan(j.at("wall"));
  if (l.jump_defined() == std::isnan(l.J)) throw std::invalid_argument("sweep: J must be present iff the jump is defined");
  return l;
}
}  // namespace

void to_json(nlohmann::json& j, const ScaleSweep& s) {
  j = {{"scene", s.scene},
       {"center", {s.center.x(), s.center.y(), s.center.z()}},
       {"r0", s.r0},
       {"floor", s.floor},
       {"gauge", s.gauge},
       {"levels", s.levels},
       {"inner", s.inner},
       {"sqrt_eps", s.sqrt_eps},
       {"bad_balls", s.bad_balls}};
}

ScaleSweep sweep_from_json(const nlohmann::json& j) {
  ScaleSweep s;
  s.scene = j.at("scene").get<std::string>();
  const auto c = j.at("center").get<std::vector<double>>();
  if (c.size() != 3) throw std::invalid_argument("sweep: center needs 3 coordinates");
  s.center = Vec3(c[0], c[1], c[2]);
  s.r0 = j.at("r0").get<double>();
  s.floor = j.at("floor").get<double>();
  s.gauge = gauge_from_json(j.at("gauge"));
  for (const auto& l : j.at("levels")) s.levels.push_back(level_from_json(l));
  for (const auto& l : j.at("inner")) s.inner.push_back(level_from_json(l));
  s.sqrt_eps = j.at("sqrt_eps").get<double>();
  s.bad_balls = j.at("bad_balls").get<std::size_t>();
  s.validate();
  return s;
}

void to_json(nlohmann::json& j, const LemmaCheck& c) {
  nlohmann::json terms = nlohmann::json::array();
  for (const LemmaTerm& t : c.terms)
    terms.push_back({{"r", t.r}, {"r1", t.r1}, {"lhs", t.lhs}, {"base", t.base}, {"rhs", t.rhs}});
  j = {{"name", c.name},
       {"C", std::isfinite(c.C) ? nlohmann::json(c.C) : nlohmann::json("inf")},
       {"cap", c.cap},
       {"tolerance", c.tolerance},
       {"pass", c.pass},
       {"partial", c.partial},
       {"skipped", c.skipped},
       {"terms", terms}};
}

void to_json(nlohmann::json& j, const SelfImprovementReport& r) {
  j = {{"tau", r.tau},
       {"a", r.a},
       {"applicable", r.applicable},
       {"deepest", r.deepest},
       {"steps", r.steps},
       {"reached_floor", r.reached_floor},
       {"violated", std::string(to_string(r.violated))},
       {"violated_at", r.violated_at}};
}

void to_json(nlohmann::json& j, const BetaExponentFit& f) {
  j = {{"alpha", f.alpha}, {"prefactor", f.prefactor}, {"residual", f.residual}, {"levels", f.levels}};
}

void to_json(nlohmann::json& j, const JumpLowerBoundReport& r) {
  j = {{"eps3", r.eps3},
       {"sites", r.sites},
       {"qualifying", r.qualifying},
       {"undefined", r.undefined},
       {"min_J", std::isfinite(r.min_J) ? nlohmann::json(r.min_J) : nlohmann::json(nullptr)},
       {"pass", r.pass}};
}

void to_json(nlohmann::json& j, const EnergySmallnessReport& r) {
  j = {{"applicable", r.applicable}, {"distance", r.distance}, {"omega2", r.omega2}, {"a0", r.a0},
       {"eta2", r.eta2},             {"eps3", r.eps3},         {"pass", r.pass}};
}

void to_json(nlohmann::json& j, const Baseline& b) { j = {{"version", 1}, {"constants", b.constants}}; }

Baseline baseline_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != 1) throw std::invalid_argument("baseline: unsupported version");
  Baseline b;
  for (const auto& [k, v] : j.at("constants").items()) {
    const double c = v.get<double>();
    if (!(std::isfinite(c) && c >= 0.0)) throw std::invalid_argument("baseline: constant '" + k + "' must be finite and >= 0");
    b.constants[k] = c;
  }
  return b;
}

void write_sweep_csv(std::ostream& os, const ScaleSweep& s) {
  os << "r,beta,omega2,J,m,f,h,kind\n";
  for (const ScaleLevel& l : s.levels)
    os << fmt(l.r) << ',' << fmt(l.beta) << ',' << fmt(l.omega2) << ',' << fmt(l.J) << ',' << fmt(l.m) << ','
       << fmt(l.f) << ',' << fmt(l.h) << ',' << to_string(l.kind) << '\n';
}

void write_beta_plot_csv(std::ostream& os, const ScaleSweep& s) {
  os << "log_r,log_beta\n";
  for (const ScaleLevel& l : s.levels)
    if (l.beta > 0.0) os << fmt(std::log(l.r)) << ',' << fmt(std::log(l.beta)) << '\n';
}

}  // namespace mslab
