#pragma once

#include "mslab/cone.hpp"
#include "mslab/discrete_set.hpp"
#include "mslab/grid.hpp"
#include "mslab/multiscale.hpp"

#include "json.hpp"

#include <array>
#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace mslab {

/// Gauge h of the minimality inequality: h = 0 or h(r) = constant * r.
struct GaugeSpec {
  enum class Form { Zero, Linear };
  Form form = Form::Zero;
  double constant = 0.0;

  static GaugeSpec zero() { return {}; }
  static GaugeSpec linear(double c) { return {Form::Linear, c}; }
  double operator()(double r) const { return form == Form::Zero ? 0.0 : constant * r; }
  /// Throws std::invalid_argument on a negative or non-finite constant.
  void validate() const;
};

/// sup{ (t/s)^b h(s) : t <= s <= max(t, r) }. Exact: for a linear gauge the
/// ratio is a monomial in s, so the sup sits at an endpoint.
double tilde_gauge(const GaugeSpec& h, double r, double b, double t);

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

struct ScaleLevel {
  double r = 0.0;
  double beta = 0.0;
  ConeKind kind = ConeKind::P;
  double omega2 = 0.0;
  JumpStatus jump_status = JumpStatus::SingleComponent;
  double J = kUndefined;  ///< NaN unless the jump is defined
  int fallback = 1;
  double m = 0.0;
  double f = 0.0;         ///< density excess against the finest fitted kind
  double h = 0.0;
  double wall = kUndefined;  ///< H^2(T_beta) / r^2, NaN unless 0 < beta < 0.1
  bool jump_defined() const { return jump_status == JumpStatus::Defined; }
};

/// Every quantity of the decay inequalities on the dyadic ladder r0, r0/2, ...
/// down to the resolution floor. `inner` holds the same quantities at 3/4 of
/// each ladder radius, for pairs with ratio in [1, 4/3].
struct ScaleSweep {
  std::string scene;
  Vec3 center = Vec3::Zero();
  double r0 = 0.0;
  double floor = 0.0;
  GaugeSpec gauge;
  std::vector<ScaleLevel> levels;
  std::vector<ScaleLevel> inner;
  double sqrt_eps = 0.0;  ///< largest bad-ball radius / r0
  std::size_t bad_balls = 0;
  /// Throws std::invalid_argument unless radii strictly decrease and every
  /// number is finite (J and wall may be NaN when undefined).
  void validate() const;
};

struct SweepOptions {
  int levels = 5;
  double floor_spacings = 3.0;  ///< no level below this many grid / K spacings
  bool bad_mass = true;         ///< run the stopping-time decomposition
  double bad_region_ratio = 0.5;  ///< candidates come from B(x, ratio r0)
  double bad_r_max_ratio = 0.5;   ///< stopping ladders start at ratio r0
  MultiscaleParams params;
  JumpOptions jump;
};

/// Pre: B(x, r0) inside u's grid and K meets B(x, r0). Throws
/// std::invalid_argument otherwise.
ScaleSweep scale_sweep(const std::string& scene, const ScalarGrid& u, const DiscreteSet& K, const GaugeSpec& gauge,
                       const Vec3& x, double r0, const SweepOptions& options = {});

/// One scale pair of a check: lhs <= base + C rhs is tested.
struct LemmaTerm {
  double r = 0.0;
  double r1 = 0.0;
  double lhs = 0.0;
  double base = 0.0;
  double rhs = 0.0;
};

struct LemmaCheck {
  std::string name;
  std::vector<LemmaTerm> terms;
  double C = 0.0;  ///< smallest constant making every term hold (inf if none does)
  double cap = 0.0;
  double tolerance = 0.0;  ///< absolute slack on lhs for quadrature noise
  bool pass = false;
  bool partial = false;    ///< some pairs skipped (undefined jump etc.)
  std::size_t skipped = 0;
};

/// Fits C over the terms and sets pass = (C <= cap).
void finish_check(LemmaCheck& c);

struct CheckOptions {
  double stability_cap = 50.0;
  double growth_cap = 50.0;
  double decay_cap = 50.0;
  double bad_mass_cap = 50.0;
  double tolerance = 1e-6;
  double a = 0.25;
  double gamma = 0.7;
  /// Throws std::invalid_argument unless caps > 0, tolerance >= 0, a is 2^-k
  /// with k >= 2 and 2 a^gamma < 1.
  void validate() const;
};

/// |(r1/r)^1/2 J(r1) - J(r)| <= C omega2(r)^1/2 on the pairs (r, 3r/4).
LemmaCheck check_jump_stability(const ScaleSweep& s, const CheckOptions& opt = {});
/// J(r) - (r1/r)^1/2 J(r1) <= C (1 + h(r)) for every ladder pair r1 < r,
/// including the 3r/4 radii.
LemmaCheck check_jump_growth(const ScaleSweep& s, const CheckOptions& opt = {});
/// omega2(a r) <= 2 a^gamma omega2(r) + C a^-2 (omega2^1/2 / J + sqrt_eps m + h)(r).
/// Pairs with undefined J keep the other terms and are flagged partial.
LemmaCheck check_energy_decay(const ScaleSweep& s, const CheckOptions& opt = {});
/// m(r) <= C (omega2 + omega2^1/2 / J + h)(r); with_wall adds H^2(T_beta)/r^2.
LemmaCheck check_bad_mass_bound(const ScaleSweep& s, const CheckOptions& opt = {}, bool with_wall = false);

enum class SmallnessClause { None, GaugeJump, Energy, BadMass, Beta };
std::string_view to_string(SmallnessClause c);

struct SelfImprovementReport {
  std::array<double, 4> tau{};  ///< tau1 > tau2 > tau3 > tau4
  double a = 0.25;
  bool applicable = false;      ///< the clauses hold at r0
  double deepest = 0.0;         ///< smallest ladder radius reached with all clauses
  std::size_t steps = 0;        ///< a-steps taken from r0
  bool reached_floor = false;
  SmallnessClause violated = SmallnessClause::None;  ///< first failing clause, if any
  double violated_at = 0.0;
};

/// Walks r0, a r0, a^2 r0, ... while h + 1/J <= tau4, omega2 <= tau3,
/// m <= tau2, beta <= tau1. Throws std::invalid_argument unless
/// 0 < tau4 < tau3 < tau2 < tau1 and a = 2^-k.
SelfImprovementReport check_self_improvement(const ScaleSweep& s, const std::array<double, 4>& tau, double a = 0.25);

struct BetaExponentFit {
  double alpha = 0.0;
  double prefactor = 0.0;  ///< beta ~ prefactor (r / r0)^alpha
  double residual = 0.0;   ///< RMS of the log residuals
  std::size_t levels = 0;
};

/// Least squares of log beta against log(r / r0) over levels at or above the
/// floor with beta > 0. Throws std::invalid_argument with fewer than 4.
BetaExponentFit fit_beta_exponent(const ScaleSweep& s);

struct JumpLowerBoundReport {
  double eps3 = 0.0;
  std::size_t sites = 0;      ///< ladder levels examined
  std::size_t qualifying = 0; ///< omega2 + h + beta <= eps3
  std::size_t undefined = 0;  ///< qualifying but with an undefined jump
  double min_J = std::numeric_limits<double>::infinity();
  bool pass = true;
};

/// Over all sweeps and levels with omega2 + h + beta <= eps3, min J > 0.
JumpLowerBoundReport jump_lower_bound_check(const std::vector<ScaleSweep>& sweeps, double eps3);

struct EnergySmallnessReport {
  bool applicable = false;
  double distance = 0.0;  ///< D_{x,r}(K, Z) for the fitted Z
  double omega2 = 0.0;    ///< omega2(x, a0 r)
  double a0 = 0.0, eta2 = 0.0, eps3 = 0.0;
  bool pass = false;
};

/// When the fitted cone is within eps3 of K in B(x, r) (bilateral), measures
/// omega2(x, a0 r) against eta2.
EnergySmallnessReport energy_smallness_check(const ScalarGrid& u, const DiscreteSet& K, const Vec3& x, double r,
                                             double a0, double eta2, double eps3, const FitOptions& fit = {});

/// Checked-in constants: one C per "scene/check" key.
struct Baseline {
  std::map<std::string, double> constants;
};

struct BaselineComparison {
  std::string key;
  double C = 0.0;
  double baseline = 0.0;
  bool known = false;
  bool regression = false;  ///< C > 2 max(baseline, floor)
};

inline constexpr double kBaselineFloor = 1e-6;
BaselineComparison compare_to_baseline(const Baseline& b, const std::string& key, double C);

void to_json(nlohmann::json& j, const GaugeSpec& g);
GaugeSpec gauge_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const ScaleLevel& l);
void to_json(nlohmann::json& j, const ScaleSweep& s);
ScaleSweep sweep_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const LemmaCheck& c);
void to_json(nlohmann::json& j, const SelfImprovementReport& r);
void to_json(nlohmann::json& j, const BetaExponentFit& f);
void to_json(nlohmann::json& j, const JumpLowerBoundReport& r);
void to_json(nlohmann::json& j, const EnergySmallnessReport& r);
void to_json(nlohmann::json& j, const Baseline& b);
Baseline baseline_from_json(const nlohmann::json& j);

/// Columns r, beta, omega2, J, m, f, h, kind; undefined J is written empty.
void write_sweep_csv(std::ostream& os, const ScaleSweep& s);
/// log r, log beta for external plotting.
void write_beta_plot_csv(std::ostream& os, const ScaleSweep& s);

}  // namespace mslab
