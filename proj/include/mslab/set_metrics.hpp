#pragma once

#include "mslab/cone.hpp"
#include "mslab/discrete_set.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mslab {

/// (1/r) sup{ d(y, Z) : y in E cap B }, or 0 when E cap B is empty.
double unilateral_distance(const DiscreteSet& E, const MinimalCone& Z, const Ball& B);

/// Normalized bilateral Hausdorff distance
/// (1/r) max{ sup_{E cap B} d(., F), sup_{F cap B} d(., E) }.
/// Empty optional when E cap B or F cap B is empty.
std::optional<double> hausdorff(const DiscreteSet& E, const DiscreteSet& F, const Ball& B);

struct FitOptions {
  int orientations = 576;       ///< coarse rotation grid size
  int refine_candidates = 3;    ///< coarse winners refined per kind
  std::size_t coarse_points = 1500;
  std::size_t refine_points = 4000;
  int max_evaluations = 1500;   ///< Nelder-Mead budget per candidate
};

struct ConeFit {
  MinimalCone cone = MinimalCone::canonical(ConeKind::P);
  double beta = 0.0;
  std::vector<ConeKind> kind_searched;
  double coarse_beta = 0.0;  ///< best value on the coarse grid (same kind)
};

/// Approximates beta: the infimum of unilateral_distance(E, Z, B) over cones
/// of the requested kinds whose set contains `constraint`. Coarse rotation
/// grid times placements of the constraint on the cone, then derivative-free
/// refinement. Throws std::invalid_argument when E cap B is empty.
ConeFit fit_cone(const DiscreteSet& E, const Ball& B, const std::vector<ConeKind>& kinds, const Vec3& constraint,
                 const FitOptions& options = {});

/// Evaluates a single candidate parametrization; exposed for the oracles.
MinimalCone cone_through(ConeKind kind, const Mat3& R, double s1, double s2, const Vec3& constraint);

enum class SeparationStatus { Separating, NotSeparating, PreconditionViolated };

/// A u8 label raster with its placement (cell centers at origin + spacing*index).
struct LabelVolume {
  std::array<int, 3> dims{0, 0, 0};
  double spacing = 1.0;
  Vec3 origin = Vec3::Zero();
  std::vector<std::uint8_t> labels;
};

struct SeparationReport {
  SeparationStatus status = SeparationStatus::NotSeparating;
  bool separating = false;
  int component_count = 0;       ///< components of B minus the cone tube
  int free_component_count = 0;  ///< components of B minus E (raster)
  double unilateral = 0.0;       ///< unilateral_distance(E, Z, B)
  LabelVolume labels;            ///< free-component label per raster cell (0 = blocked or outside B)
};

/// Rasterizes B at E's spacing, blocks cells within one spacing of E, labels
/// 6-connected free components, and checks that the tube-complement regions
/// of Z land in pairwise distinct free components.
SeparationReport separating_check(const DiscreteSet& E, const Ball& B, const MinimalCone& Z, double eps0);

/// H^2(E cap B) from weights; points within half a spacing of the sphere
/// count half.
double discrete_area(const DiscreteSet& E, const Ball& B);

/// r^-2 discrete_area(E, B(x, r)) - density(kind). May be negative.
double excess_density(const DiscreteSet& E, const Vec3& x, double r, ConeKind kind);

std::string_view to_string(SeparationStatus s);
void to_json(nlohmann::json& j, const ConeFit& fit);
void to_json(nlohmann::json& j, const SeparationReport& rep);

}  // namespace mslab
