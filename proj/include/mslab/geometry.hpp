#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace mslab {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Closed Euclidean ball B(center, radius).
struct Ball {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;

  Ball() = default;
  Ball(const Vec3& c, double r);

  bool contains(const Vec3& p) const { return (p - center).squaredNorm() <= radius * radius; }
  bool intersects(const Ball& other) const {
    return (center - other.center).norm() < radius + other.radius;
  }
  Ball scaled(double factor) const { return Ball(center, radius * factor); }
};

/// True iff R is orthogonal with determinant +1 to the given tolerance.
bool is_rotation(const Mat3& R, double tol = 1e-12);

/// Rotation from a unit quaternion given as (w, x, y, z).
Mat3 rotation_from_quaternion(const std::array<double, 4>& wxyz);
std::array<double, 4> quaternion_from_rotation(const Mat3& R);

/// Rotation exp([omega]_x) (Rodrigues).
Mat3 rotation_from_axis_angle(const Vec3& omega);

/// Haar-uniform random rotation.
Mat3 random_rotation(std::mt19937_64& rng);

/// Deterministic low-discrepancy set of n rotations covering SO(3)
/// (super-Fibonacci spiral on the unit quaternions).
std::vector<Mat3> rotation_grid(int n);

/// Re-orthonormalize a nearly orthogonal matrix (polar projection, det +1).
Mat3 orthonormalize(const Mat3& M);

}  // namespace mslab
