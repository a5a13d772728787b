#pragma once

#include "mslab/cone.hpp"
#include "mslab/discrete_set.hpp"
#include "mslab/grid.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mslab {

/// Default dimensional constant of the gauge h(r) = C_N |g|_inf^2 r.
inline constexpr double kDefaultGaugeConstant = 12.566370614359172;  // 4 pi

enum class SceneMode {
  Exact,      ///< u = g piecewise smooth, K sampled from the (warped) cone
  PhaseField  ///< only g; (u, K) come from the phase-field solver
};

struct Bump {
  Vec3 center;
  double diameter;
};

struct Hole {
  Vec3 center;
  double radius;
};

/// Synthetic data on the unit cube: sector constants of a minimal cone,
/// pushed through a smooth warp, plus optional background slope and noise.
struct SceneSpec {
  std::string name = "scene";
  SceneMode mode = SceneMode::PhaseField;
  ConeKind kind = ConeKind::P;
  Vec3 apex = Vec3::Constant(0.5);
  Mat3 orientation = Mat3::Identity();
  std::vector<double> contrasts;  ///< one value per sector; empty -> 0, 1, 2, ...
  Vec3 gradient = Vec3::Zero();   ///< added to g as gradient . (p - apex)
  double bend = 0.0;              ///< warp a |q - apex|^2 along bend_direction
  Vec3 bend_direction = Vec3::Zero();  ///< zero -> third column of orientation
  std::vector<Bump> bumps;        ///< cos^2 caps of height diameter/10
  std::vector<Hole> holes;        ///< balls removed from K (exact mode only)
  double noise = 0.0;             ///< uniform noise amplitude on g
  std::uint64_t seed = 1;
  int grid = 64;
  /// Phase-field mode only: cells cut by the geometry get the mean sector
  /// value over supersample^3 sub-points (1 = point sampling).
  int supersample = 4;
  double gauge_constant = kDefaultGaugeConstant;  ///< the C_N of the gauge
};

struct Scene {
  SceneSpec spec;
  MinimalCone cone = MinimalCone::canonical(ConeKind::P);
  ScalarGrid g;
  DiscreteSet K;  ///< exact mode only; empty otherwise
  /// C_N |g|_inf^2, i.e. the gauge slope for unit fidelity weight.
  double gauge_constant = 0.0;
};

/// Warp displacement D(q); the scene geometry is (I + D)(cone).
Vec3 scene_displacement(const SceneSpec& spec, const Vec3& q);
/// Solves q + D(q) = p by fixed-point iteration.
Vec3 scene_preimage(const SceneSpec& spec, const Vec3& p);
/// Sector index of p in the warped geometry.
int scene_sector(const SceneSpec& spec, const Vec3& p);

/// Builds g (and K in exact mode). Exact mode samples g at cell centres.
/// Deterministic in the spec (including seed).
/// Throws std::invalid_argument on an invalid spec.
Scene make_scene(const SceneSpec& spec);

/// Sample of the warped cone inside the unit cube with the given spacing.
DiscreteSet scene_singular_set(const SceneSpec& spec, double spacing);

void to_json(nlohmann::json& j, const SceneSpec& s);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

}  // namespace mslab
