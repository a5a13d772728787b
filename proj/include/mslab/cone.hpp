#pragma once

#include "mslab/geometry.hpp"

#include "json.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace mslab {

/// The three minimal cones of R^3: plane, three half-planes at 120 degrees,
/// and the cone over the edges of a regular tetrahedron.
enum class ConeKind { P = 1, Y = 2, T = 3 };

/// H^2(Z0 cap B(0,1)) for the tetrahedral cone. Produced by
/// tools/compute_dplus.py (face quadrature, cross-checked by Monte Carlo);
/// equals 3*acos(-1/3) to all printed digits.
inline constexpr double kTetraDensity = 5.731899708747056;

double density(ConeKind kind);
/// 1 for P, 2 for Y, 3 for T.
int type_index(ConeKind kind);
/// Number of components of R^3 minus the cone: type + 1.
int sector_count(ConeKind kind);
std::string_view to_string(ConeKind kind);
ConeKind parse_cone_kind(std::string_view name);

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit
};
using Spine = std::vector<Ray>;

/// Vertices A1..A4 of the reference tetrahedron (unit vectors).
const std::array<Vec3, 4>& tetra_vertices();
/// In-plane unit directions of the three half-planes of Y0.
const std::array<Vec3, 3>& y_directions();

/// A planar face of a canonical cone: the wedge
/// {rho*(cos a * e_a + sin a * e_b) : rho >= 0, 0 <= a <= angle} through the
/// origin. The plane uses angle = 2*pi.
struct Face {
  Vec3 e_a;
  Vec3 e_b;
  double angle;
  Vec3 normal() const { return e_a.cross(e_b); }
};

/// The set R(Z0) + apex for the canonical cone Z0 of its kind.
class MinimalCone {
 public:
  MinimalCone(ConeKind kind, const Vec3& apex, const Mat3& orientation);
  static MinimalCone canonical(ConeKind kind) { return MinimalCone(kind, Vec3::Zero(), Mat3::Identity()); }

  ConeKind kind() const { return kind_; }
  const Vec3& apex() const { return apex_; }
  const Mat3& orientation() const { return orientation_; }

  Vec3 to_local(const Vec3& p) const { return orientation_.transpose() * (p - apex_); }
  Vec3 to_world(const Vec3& q) const { return orientation_ * q + apex_; }

  /// Faces of the canonical cone, in local coordinates.
  const std::vector<Face>& local_faces() const;
  Spine spine() const;

  /// Image under p -> R p + t.
  MinimalCone transformed(const Mat3& R, const Vec3& t) const;
  MinimalCone with_apex(const Vec3& apex) const { return MinimalCone(kind_, apex, orientation_); }

  /// Index of the component of R^3 \ Z containing p (ties resolved to the
  /// lowest index). In [0, sector_count(kind)).
  int sector(const Vec3& p) const;

 private:
  ConeKind kind_;
  Vec3 apex_;
  Mat3 orientation_;
};

/// Euclidean distance from p to the closed cone set.
double distance_to_cone(const Vec3& p, const MinimalCone& Z);
/// A nearest point of the cone to p.
Vec3 nearest_point_on_cone(const Vec3& p, const MinimalCone& Z);
/// Index into Z.local_faces() of a face nearest to p (lowest index on ties).
std::size_t nearest_face_index(const Vec3& p, const MinimalCone& Z);

/// H^2(Z cap B). Apex-centered balls use density * r^2; otherwise each face
/// contributes the area of a planar disk-wedge intersection by adaptive
/// quadrature.
double cone_ball_area(const MinimalCone& Z, const Ball& B);

/// Area of {wedge of opening `angle` at the origin} cap disk(center, radius)
/// in the plane.
double wedge_disk_area(const Eigen::Vector2d& center, double radius, double angle);

struct DiscreteSet;

/// Point sample of Z cap B on a square lattice of the given spacing laid out
/// on each face; weights are clipped cell areas.
DiscreteSet sample_cone(const MinimalCone& Z, const Ball& B, double spacing);

struct Recentered {
  double radius;
  MinimalCone cone;
};

/// Finds r1 in {r0, V r0, V^2 r0} and a cone Z' with Z cap B(x,r1) =
/// Z' cap B(x,r1) whose apex lies in B(x, r1/V). Z' may be of lower kind.
/// Throws std::invalid_argument if x is not on Z.
Recentered recenter(const MinimalCone& Z, const Vec3& x, double r0, double V);

void to_json(nlohmann::json& j, const MinimalCone& Z);
MinimalCone cone_from_json(const nlohmann::json& j);

}  // namespace mslab
