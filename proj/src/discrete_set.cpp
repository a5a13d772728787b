#include "mslab/discrete_set.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mslab {

double DiscreteSet::total_weight() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

void DiscreteSet::append(const DiscreteSet& other) {
  points.insert(points.end(), other.points.begin(), other.points.end());
  weights.insert(weights.end(), other.weights.begin(), other.weights.end());
}

void DiscreteSet::validate() const {
  if (points.size() != weights.size()) throw std::invalid_argument("DiscreteSet: points/weights size mismatch");
  if (!(spacing > 0.0)) throw std::invalid_argument("DiscreteSet: spacing must be positive");
  for (std::size_t i = 0; i < size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
      throw std::invalid_argument("DiscreteSet: weights must be positive and finite");
    if (!points[i].allFinite()) throw std::invalid_argument("DiscreteSet: non-finite point");
  }
}

std::vector<std::size_t> DiscreteSet::indices_in(const Ball& B) const {
  std::vector<std::size_t> out;
  const double r2 = B.radius * B.radius;
  for (std::size_t i = 0; i < points.size(); ++i)
    if ((points[i] - B.center).squaredNorm() <= r2) out.push_back(i);
  return out;
}

DiscreteSet DiscreteSet::restricted(const Ball& B) const {
  DiscreteSet out;
  out.spacing = spacing;
  for (std::size_t i : indices_in(B)) out.add(points[i], weights[i]);
  return out;
}

void write_csv(std::ostream& os, const DiscreteSet& E) {
  os << "x,y,z,weight\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < E.size(); ++i) {
    const Vec3& p = E.points[i];
    os << p.x() << ',' << p.y() << ',' << p.z() << ',' << E.weights[i] << '\n';
  }
}

DiscreteSet read_csv(std::istream& is, double spacing) {
  DiscreteSet E;
  E.spacing = spacing;
  std::string line;
  if (!std::getline(is, line)) return E;
  if (line.rfind("x,y,z,weight", 0) != 0) throw std::runtime_error("point CSV: missing header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double v[4];
    char comma;
    ls >> v[0] >> comma >> v[1] >> comma >> v[2] >> comma >> v[3];
    if (!ls) throw std::runtime_error("point CSV: malformed row '" + line + "'");
    E.add(Vec3(v[0], v[1], v[2]), v[3]);
  }
  return E;
}

void write_ply(std::ostream& os, const DiscreteSet& E) {
  os << "ply\nformat ascii 1.0\n";
  os << "element vertex " << E.size() << "\n";
  os << "property double x\nproperty double y\nproperty double z\nproperty double weight\n";
  os << "end_header\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < E.size(); ++i) {
    const Vec3& p = E.points[i];
    os << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << E.weights[i] << '\n';
  }
}

// ---------------------------------------------------------------------------

PointIndex::PointIndex(const std::vector<Vec3>& points, double cell_size) : points_(points) {
  if (!(cell_size > 0.0)) throw std::invalid_argument("PointIndex: cell size must be positive");
  if (points_.empty()) return;
  Vec3 lo = points_.front(), hi = points_.front();
  for (const Vec3& p : points_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  cell_ = cell_size;
  // Cap the dense table at ~8M cells.
  for (;;) {
    for (int a = 0; a < 3; ++a) dims_[a] = static_cast<long>(std::floor((hi[a] - lo[a]) / cell_)) + 1;
    if (static_cast<double>(dims_[0]) * dims_[1] * dims_[2] <= 8.0e6) break;
    cell_ *= 1.5;
  }
  origin_ = lo;
  const std::size_t ncell = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
  std::vector<std::size_t> key(points_.size());
  cell_start_.assign(ncell + 1, 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto c = cell_of(points_[i]);
    key[i] = flat(c[0], c[1], c[2]);
    ++cell_start_[key[i] + 1];
  }
  for (std::size_t c = 0; c < ncell; ++c) cell_start_[c + 1] += cell_start_[c];
  order_.resize(points_.size());
  std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) order_[fill[key[i]]++] = i;
}

std::array<long, 3> PointIndex::cell_of(const Vec3& p) const {
  std::array<long, 3> c{};
  for (int a = 0; a < 3; ++a) {
    const long v = static_cast<long>(std::floor((p[a] - origin_[a]) / cell_));
    c[a] = std::clamp(v, 0L, dims_[a] - 1);
  }
  return c;
}

template <typename Visit>
void PointIndex::visit_box(const Vec3& lo, const Vec3& hi, Visit&& visit) const {
  std::array<long, 3> a{}, b{};
  for (int d = 0; d < 3; ++d) {
    a[d] = std::max(0L, static_cast<long>(std::floor((lo[d] - origin_[d]) / cell_)));
    b[d] = std::min(dims_[d] - 1, static_cast<long>(std::floor((hi[d] - origin_[d]) / cell_)));
    if (a[d] > b[d]) return;
  }
  for (long k = a[2]; k <= b[2]; ++k)
    for (long j = a[1]; j <= b[1]; ++j)
      for (long i = a[0]; i <= b[0]; ++i) {
        const std::size_t c = flat(i, j, k);
        for (std::size_t s = cell_start_[c]; s < cell_start_[c + 1]; ++s)
          if (!visit(order_[s])) return;
      }
}

std::size_t PointIndex::nearest(const Vec3& p) const {
  if (points_.empty()) return 0;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = points_.size();
  // Grow a cube around p until the best candidate is certified.
  double half = cell_;
  const double extent = cell_ * static_cast<double>(std::max({dims_[0], dims_[1], dims_[2]})) +
                        (p - origin_).cwiseAbs().maxCoeff();
  for (;;) {
    const Vec3 h = Vec3::Constant(half);
    visit_box(p - h, p + h, [&](std::size_t i) {
      const double d2 = (points_[i] - p).squaredNorm();
      if (d2 < best || (d2 == best && i < best_i)) {
        best = d2;
        best_i = i;
      }
      return true;
    });
    if (best_i < points_.size() && std::sqrt(best) <= half) return best_i;
    if (half > 2.0 * extent + cell_) break;
    half *= 2.0;
  }
  // Fallback: exhaustive.
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const double d2 = (points_[i] - p).squaredNorm();
    if (d2 < best || (d2 == best && i < best_i)) {
      best = d2;
      best_i = i;
    }
  }
  return best_i;
}

double PointIndex::nearest_distance(const Vec3& p) const {
  if (points_.empty()) return std::numeric_limits<double>::infinity();
  return (points_[nearest(p)] - p).norm();
}

bool PointIndex::any_within(const Vec3& p, double radius) const {
  if (points_.empty()) return false;
  bool found = false;
  const double r2 = radius * radius;
  const Vec3 h = Vec3::Constant(radius);
  visit_box(p - h, p + h, [&](std::size_t i) {
    if ((points_[i] - p).squaredNorm() <= r2) {
      found = true;
      return false;
    }
    return true;
  });
  return found;
}

std::vector<std::size_t> PointIndex::within(const Vec3& p, double radius) const {
  std::vector<std::size_t> out;
  if (points_.empty()) return out;
  const double r2 = radius * radius;
  const Vec3 h = Vec3::Constant(radius);
  visit_box(p - h, p + h, [&](std::size_t i) {
    if ((points_[i] - p).squaredNorm() <= r2) out.push_back(i);
    return true;
  });
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mslab
