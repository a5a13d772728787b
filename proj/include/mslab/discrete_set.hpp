#pragma once

#include "mslab/geometry.hpp"

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace mslab {

/// Weighted point sample of a 2D set in R^3. Weights are area quadrature
/// (length^2) so that their sum approximates the H^2 measure of the set.
struct DiscreteSet {
  std::vector<Vec3> points;
  std::vector<double> weights;
  double spacing = 1.0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  double total_weight() const;

  void add(const Vec3& p, double w) {
    points.push_back(p);
    weights.push_back(w);
  }
  void append(const DiscreteSet& other);

  /// Throws std::invalid_argument on non-positive weights or spacing.
  void validate() const;

  /// Indices of points in the closed ball.
  std::vector<std::size_t> indices_in(const Ball& B) const;
  DiscreteSet restricted(const Ball& B) const;
};

void write_csv(std::ostream& os, const DiscreteSet& E);
DiscreteSet read_csv(std::istream& is, double spacing);
void write_ply(std::ostream& os, const DiscreteSet& E);

/// Uniform-grid bucket index over a fixed point set for nearest-neighbour and
/// fixed-radius queries.
class PointIndex {
 public:
  PointIndex() = default;
  PointIndex(const std::vector<Vec3>& points, double cell_size);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }

  /// Distance to the nearest indexed point (+inf when empty).
  double nearest_distance(const Vec3& p) const;
  /// Index of the nearest point (size() when empty).
  std::size_t nearest(const Vec3& p) const;
  /// True iff some indexed point lies within `radius` of p.
  bool any_within(const Vec3& p, double radius) const;
  /// Indices of points within `radius` of p.
  std::vector<std::size_t> within(const Vec3& p, double radius) const;

 private:
  std::array<long, 3> cell_of(const Vec3& p) const;
  std::size_t flat(long i, long j, long k) const {
    return static_cast<std::size_t>(i + dims_[0] * (j + dims_[1] * k));
  }
  template <typename Visit>
  void visit_box(const Vec3& lo, const Vec3& hi, Visit&& visit) const;

  std::vector<Vec3> points_;
  Vec3 origin_ = Vec3::Zero();
  double cell_ = 1.0;
  std::array<long, 3> dims_{0, 0, 0};
  std::vector<std::size_t> cell_start_;
  std::vector<std::size_t> order_;
};

}  // namespace mslab
