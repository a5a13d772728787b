#pragma once

#include "mslab/cone.hpp"
#include "mslab/discrete_set.hpp"
#include "mslab/grid.hpp"
#include "mslab/set_metrics.hpp"

#include "json.hpp"

#include <functional>
#include <limits>
#include <string_view>
#include <utility>
#include <vector>

namespace mslab {

/// Thresholds of the good-ball test and the bad-ball construction.
struct MultiscaleParams {
  double eps0 = 5e-2;        ///< cone closeness of a good ball
  double eps0_prime = 1e-2;  ///< surplus allowance of a good ball, per r^2
  double A = 2.0;            ///< bad balls are B(x, A d(x))
  double U = 40.0;           ///< smoothing kernel radius is 2 d(y, dV) / U
  double floor_spacings = 2.0;  ///< stopping ladders end at this many K spacings
  FitOptions fit;
  /// Throws std::invalid_argument unless 0 < eps0' < eps0 < 0.1, A >= 1, U > 30,
  /// floor_spacings >= 1.
  void validate() const;
};

/// True when the singular part of Z (spine for Y, apex for T) passes within
/// r/2 of the centre of B. Planes are always centred.
bool almost_centered(const MinimalCone& Z, const Ball& B);

enum class JumpStatus {
  Defined,
  SingleComponent,  ///< fewer than two components of B minus the tube
  BetaTooLarge,     ///< the fit is too far from K for the sectors to mean anything
  OffCenter,        ///< neither B, 2B nor 4B has an almost centred cone
  OutsideGrid       ///< no candidate ball lies inside u's grid
};
std::string_view to_string(JumpStatus s);

struct JumpDomain {
  int sector = 0;
  Ball ball{Vec3::Zero(), 1.0};
  double mean = 0.0;
  std::size_t cells = 0;
};

struct JumpReport {
  JumpStatus status = JumpStatus::SingleComponent;
  Ball requested{Vec3::Zero(), 1.0};
  Ball ball{Vec3::Zero(), 1.0};  ///< ball actually used (r, 2r or 4r)
  int fallback = 1;              ///< 1, 2 or 4
  MinimalCone cone = MinimalCone::canonical(ConeKind::P);
  double beta = 0.0;
  std::vector<JumpDomain> domains;
  std::vector<double> deltas;  ///< |m_k - m_l| for k < l in domain order
  double min_delta = 0.0;
  double J = 0.0;
  bool defined() const { return status == JumpStatus::Defined; }
};

struct JumpOptions {
  double tube = 5e-2;      ///< components are taken outside {d(., Z) <= tube r}
  double max_beta = 1e-1;  ///< larger fits make the jump undefined
  FitOptions fit;
};

/// Normalized jump of u in B. Domains D_k of radius r/10 sit at the cell of
/// each component farthest from Z (first in index order on ties). When the
/// fitted cone is not almost centred, refits in B(x, 2r) then B(x, 4r).
/// Throws std::invalid_argument when B itself leaves u's grid.
JumpReport jump(const ScalarGrid& u, const DiscreteSet& K, const Ball& B, const ConeFit& fit,
                const JumpOptions& options = {});

/// H^2(F cap B) - H^2(K cap B) for the competitor in use.
using SurplusFn = std::function<double(const Ball&)>;
SurplusFn no_surplus();

struct ConeCloseness {
  double beta = 0.0;  ///< upper bound on beta(center, r); exact fit value when searched
  MinimalCone cone = MinimalCone::canonical(ConeKind::P);
  bool searched = false;  ///< true when the full fit was needed
};

/// Decides beta_E(x, r) <= eps. Tries the hint cones moved to pass through x
/// and the least-squares plane through x first, then a plane-only fit, then
/// the Y and T fits, stopping at the first cone within eps.
ConeCloseness cone_closeness(const DiscreteSet& E, const Ball& B, double eps, const std::vector<MinimalCone>& hints,
                             const FitOptions& fit = {});

enum class BallClause { None, Surplus, Cone };
std::string_view to_string(BallClause c);

struct GoodBallReport {
  bool good = false;
  BallClause failed = BallClause::None;
  double surplus = 0.0;
  double beta = 0.0;
  MinimalCone cone = MinimalCone::canonical(ConeKind::P);
};

/// Surplus <= eps0' r^2 and some cone through the centre within eps0 r of K cap B.
GoodBallReport good_ball(const DiscreteSet& K, const SurplusFn& surplus, const Ball& B, const MultiscaleParams& params,
                         const std::vector<MinimalCone>& hints = {});

struct StoppingTime {
  double d = 0.0;
  std::vector<double> radii;  ///< decreasing dyadic ladder
  std::vector<bool> good;     ///< per tested radius, top down
};

/// d(x) on the ladder r_max, r_max/2, ... >= floor_spacings K.spacing: the smallest ladder
/// radius above which every ladder ball is good, 0 when all are, 2 r_max when
/// the top one already fails. Scans top down and stops at the first bad ball.
/// Throws std::invalid_argument when K has no point within r_max of x.
StoppingTime stopping_time(const DiscreteSet& K, const Vec3& x, const MultiscaleParams& params, double r_max,
                           const SurplusFn& surplus, const std::vector<MinimalCone>& hints = {});

struct BadBall {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;    ///< A d(center)
  double stopping = 0.0;  ///< d(center)
};

struct StoppingDecomposition {
  double eps0 = 0.0, eps0_prime = 0.0, A = 0.0;
  Ball region{Vec3::Zero(), 1.0};
  double r_max = 0.0;
  std::vector<BadBall> balls;   ///< the disjoint family S
  std::size_t candidates = 0;   ///< K points of the region examined
  std::size_t stopped = 0;      ///< of which d > 0
  bool disjoint = true;
  bool covered = true;          ///< every candidate ball lies in some 5 B_i
  double max_radius() const;
};

/// Stopping times at every K point of the region (parallel), then greedy
/// Vitali selection: candidates B(x, A d(x)) with d > 0 by decreasing radius
/// (index order on ties), each kept when disjoint from all kept balls.
StoppingDecomposition bad_balls(const DiscreteSet& K, const Ball& region, const MultiscaleParams& params, double r_max,
                                const SurplusFn& surplus, const std::vector<MinimalCone>& hints = {});

/// r^-2 sum of r_i^2 over bad balls meeting B.
double bad_mass(const StoppingDecomposition& S, const Ball& B);

/// inf over S of d(x, B_i) + r_i; +inf when S is empty.
double geometric_function(const StoppingDecomposition& S, const Vec3& x);

/// Radius in [r0/2, 3 r0/4] (64 equispaced, first on ties) minimizing the sum
/// of r_i^2 over bad balls meeting the sphere of that radius about `center`.
double choose_radius_rho(const StoppingDecomposition& S, const Vec3& center, double r0);

/// H^2 of {y in dB : d(y, Z) <= beta r} by Fibonacci quadrature on the sphere.
/// Requires 0 < beta < 0.1.
double boundary_wall(const Ball& B, const MinimalCone& Z, double beta, int samples = 200000);

struct StarReport {
  std::size_t sites = 0;
  std::size_t admissible = 0;   ///< (y, s) pairs where K stays cone-close above s
  std::size_t violations = 0;
  double worst_beta = 0.0;      ///< largest beta_F bound over admissible pairs
  bool pass = true;
};

struct CompetitorOptions {
  MultiscaleParams params;
  JumpOptions jump;
  int level_candidates = 32;
  std::size_t star_sites = 160;  ///< K points examined by the Property star check
  double max_beta = 1e-2;
};

struct CompetitorSet {
  DiscreteSet F;                  ///< K cap B plus the chosen level surfaces
  std::vector<std::pair<int, int>> pairs;  ///< sector pairs, one level each
  std::vector<double> levels;
  std::size_t added = 0;          ///< points of F not in K
  double area_surplus = 0.0;      ///< H^2(F \ K)
  double omega2 = 0.0;
  double J = 0.0;
  double surplus_constant = 0.0;  ///< surplus / (r^2 omega2^1/2 J^-1)
  double tube_width = 0.0;        ///< max d(F, Z) / r over added points
  SeparationReport separation;
  StarReport star;
  JumpReport jump;
};

/// Separating competitor F = (K cap B) u level surfaces of a smoothed
/// sector-constant extension of u. Throws std::invalid_argument when the jump
/// is undefined or zero, the fit exceeds max_beta, or its cone is not almost
/// centred in B. A non-separating result is reported, not thrown.
CompetitorSet build_competitor(const ScalarGrid& u, const DiscreteSet& K, const Ball& B, const ConeFit& fit,
                               const CompetitorOptions& options = {});

/// Surplus of the added part of F inside a ball.
SurplusFn competitor_surplus(const CompetitorSet& C);

void to_json(nlohmann::json& j, const JumpReport& r);
void to_json(nlohmann::json& j, const StoppingDecomposition& S);
void to_json(nlohmann::json& j, const StarReport& r);
void to_json(nlohmann::json& j, const CompetitorSet& C);

}  // namespace mslab
