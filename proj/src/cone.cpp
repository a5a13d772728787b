#include "mslab/cone.hpp"

#include "mslab/discrete_set.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mslab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

const std::array<std::pair<int, int>, 6> kTetraEdges{{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

std::vector<Face> make_faces(ConeKind kind) {
  std::vector<Face> faces;
  switch (kind) {
    case ConeKind::P:
      faces.push_back({Vec3::UnitX(), Vec3::UnitY(), 2.0 * kPi});
      break;
    case ConeKind::Y:
      // Half-plane {t d + s e3 : t >= 0}: wedge of opening pi from e3 through d.
      for (const Vec3& d : y_directions()) faces.push_back({Vec3::UnitZ(), d, kPi});
      break;
    case ConeKind::T: {
      const auto& A = tetra_vertices();
      for (const auto& [i, j] : kTetraEdges) {
        const Vec3 ea = A[i];
        const Vec3 eb = (A[j] - A[j].dot(ea) * ea).normalized();
        faces.push_back({ea, eb, std::acos(std::clamp(A[i].dot(A[j]), -1.0, 1.0))});
      }
      break;
    }
  }
  return faces;
}

// Nearest point of a face (local coordinates, apex at the origin).
Vec3 nearest_on_face(const Vec3& p, const Face& f) {
  const double a = p.dot(f.e_a);
  const double b = p.dot(f.e_b);
  if (f.angle >= 2.0 * kPi) return a * f.e_a + b * f.e_b;
  const double phi = std::atan2(b, a);
  if (phi >= 0.0 && phi <= f.angle) return a * f.e_a + b * f.e_b;
  // Outside the wedge: nearest point lies on one of the two boundary rays.
  const Vec3 d0 = f.e_a;
  const Vec3 d1 = std::cos(f.angle) * f.e_a + std::sin(f.angle) * f.e_b;
  const Vec3 q0 = std::max(0.0, p.dot(d0)) * d0;
  const Vec3 q1 = std::max(0.0, p.dot(d1)) * d1;
  return (p - q0).squaredNorm() <= (p - q1).squaredNorm() ? q0 : q1;
}

Vec3 nearest_local(const Vec3& p, const std::vector<Face>& faces) {
  Vec3 best = Vec3::Zero();
  double best_d2 = kInf;
  for (const Face& f : faces) {
    const Vec3 q = nearest_on_face(p, f);
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = q;
    }
  }
  return best;
}

bool in_wedge_strict(double x, double y, double angle) {
  if (angle >= 2.0 * kPi) return true;
  if (angle > kPi - 1e-15) return y >= 0.0;
  return y >= 0.0 && std::sin(angle) * x - std::cos(angle) * y >= 0.0;
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (b <= a) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

struct TetraFace {
  Vec3 normal;
  Vec3 inward_a;  // in-plane normal of ray A_i pointing into the face
  Vec3 inward_b;  // same for ray A_j
};

const std::array<TetraFace, 6>& tetra_face_table();

}  // namespace

const std::array<Vec3, 4>& tetra_vertices() {
  static const std::array<Vec3, 4> A{
      Vec3(1.0, 0.0, 0.0),
      Vec3(-1.0 / 3.0, 2.0 * std::sqrt(2.0) / 3.0, 0.0),
      Vec3(-1.0 / 3.0, -std::sqrt(2.0) / 3.0, std::sqrt(6.0) / 3.0),
      Vec3(-1.0 / 3.0, -std::sqrt(2.0) / 3.0, -std::sqrt(6.0) / 3.0),
  };
  return A;
}

namespace {
const std::array<TetraFace, 6>& tetra_face_table() {
  static const std::array<TetraFace, 6> table = [] {
    std::array<TetraFace, 6> t{};
    const auto& A = tetra_vertices();
    for (std::size_t e = 0; e < kTetraEdges.size(); ++e) {
      const Vec3& ai = A[kTetraEdges[e].first];
      const Vec3& aj = A[kTetraEdges[e].second];
      t[e].normal = ai.cross(aj).normalized();
      t[e].inward_a = (aj - aj.dot(ai) * ai).normalized();
      t[e].inward_b = (ai - ai.dot(aj) * aj).normalized();
    }
    return t;
  }();
  return table;
}
}  // namespace

const std::array<Vec3, 3>& y_directions() {
  static const std::array<Vec3, 3> d{
      Vec3(1.0, 0.0, 0.0),
      Vec3(-0.5, std::sqrt(3.0) / 2.0, 0.0),
      Vec3(-0.5, -std::sqrt(3.0) / 2.0, 0.0),
  };
  return d;
}

double density(ConeKind kind) {
  switch (kind) {
    case ConeKind::P: return kPi;
    case ConeKind::Y: return 1.5 * kPi;
    case ConeKind::T: return kTetraDensity;
  }
  return 0.0;
}

int type_index(ConeKind kind) { return static_cast<int>(kind); }
int sector_count(ConeKind kind) { return type_index(kind) + 1; }

std::string_view to_string(ConeKind kind) {
  switch (kind) {
    case ConeKind::P: return "P";
    case ConeKind::Y: return "Y";
    case ConeKind::T: return "T";
  }
  return "?";
}

ConeKind parse_cone_kind(std::string_view name) {
  if (name == "P" || name == "p" || name == "plane") return ConeKind::P;
  if (name == "Y" || name == "y") return ConeKind::Y;
  if (name == "T" || name == "t") return ConeKind::T;
  throw std::invalid_argument("unknown cone kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

MinimalCone::MinimalCone(ConeKind kind, const Vec3& apex, const Mat3& orientation)
    : kind_(kind), apex_(apex), orientation_(orientation) {
  if (!apex.allFinite()) throw std::invalid_argument("MinimalCone: non-finite apex");
  if (!is_rotation(orientation, 1e-12)) {
    // Accept round-off from composed rotations, reject anything else.
    if (!is_rotation(orientation, 1e-9)) throw std::invalid_argument("MinimalCone: orientation is not a rotation");
    orientation_ = orthonormalize(orientation);
  }
}

const std::vector<Face>& MinimalCone::local_faces() const {
  static const std::vector<Face> p = make_faces(ConeKind::P);
  static const std::vector<Face> y = make_faces(ConeKind::Y);
  static const std::vector<Face> t = make_faces(ConeKind::T);
  switch (kind_) {
    case ConeKind::P: return p;
    case ConeKind::Y: return y;
    case ConeKind::T: return t;
  }
  return p;
}

Spine MinimalCone::spine() const {
  Spine s;
  switch (kind_) {
    case ConeKind::P: break;
    case ConeKind::Y: {
      const Vec3 d = orientation_.col(2);
      s.push_back({apex_, d});
      s.push_back({apex_, -d});
      break;
    }
    case ConeKind::T:
      for (const Vec3& a : tetra_vertices()) s.push_back({apex_, orientation_ * a});
      break;
  }
  return s;
}

MinimalCone MinimalCone::transformed(const Mat3& R, const Vec3& t) const {
  return MinimalCone(kind_, R * apex_ + t, R * orientation_);
}

int MinimalCone::sector(const Vec3& p) const {
  const Vec3 q = to_local(p);
  switch (kind_) {
    case ConeKind::P: return q.z() >= 0.0 ? 0 : 1;
    case ConeKind::Y: {
      int best = 0;
      double best_v = kInf;
      for (int i = 0; i < 3; ++i) {
        const double v = q.dot(y_directions()[i]);
        if (v < best_v) {
          best_v = v;
          best = i;
        }
      }
      return best;
    }
    case ConeKind::T: {
      int best = 0;
      double best_v = kInf;
      for (int i = 0; i < 4; ++i) {
        const double v = q.dot(tetra_vertices()[i]);
        if (v < best_v) {
          best_v = v;
          best = i;
        }
      }
      return best;
    }
  }
  return 0;
}

Vec3 nearest_point_on_cone(const Vec3& p, const MinimalCone& Z) {
  return Z.to_world(nearest_local(Z.to_local(p), Z.local_faces()));
}

std::size_t nearest_face_index(const Vec3& p, const MinimalCone& Z) {
  const Vec3 q = Z.to_local(p);
  const auto& faces = Z.local_faces();
  std::size_t best = 0;
  double best_d2 = kInf;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const double d2 = (q - nearest_on_face(q, faces[i])).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

double distance_to_cone(const Vec3& p, const MinimalCone& Z) {
  const Vec3 q = Z.to_local(p);
  switch (Z.kind()) {
    case ConeKind::P: return std::abs(q.z());
    case ConeKind::Y: {
      double best = kInf;
      for (const Vec3& d : y_directions()) {
        const double t = std::max(0.0, q.x() * d.x() + q.y() * d.y());
        best = std::min(best, std::hypot(q.x() - t * d.x(), q.y() - t * d.y()));
      }
      return best;
    }
    case ConeKind::T: {
      const auto& A = tetra_vertices();
      double best2 = kInf;
      for (const Vec3& a : A) {
        const double t = std::max(0.0, q.dot(a));
        best2 = std::min(best2, (q - t * a).squaredNorm());
      }
      for (const TetraFace& f : tetra_face_table()) {
        if (q.dot(f.inward_a) >= 0.0 && q.dot(f.inward_b) >= 0.0) {
          const double h = q.dot(f.normal);
          best2 = std::min(best2, h * h);
        }
      }
      return std::sqrt(best2);
    }
  }
  return kInf;
}

// ---------------------------------------------------------------------------

double wedge_disk_area(const Eigen::Vector2d& c, double radius, double angle) {
  if (!(radius > 0.0)) return 0.0;
  if (angle >= 2.0 * kPi) return kPi * radius * radius;
  const double c2 = c.squaredNorm();
  const double R2 = radius * radius;
  auto slice = [&](double phi) {
    const double uc = std::cos(phi) * c.x() + std::sin(phi) * c.y();
    const double disc = uc * uc - c2 + R2;
    if (disc <= 0.0) return 0.0;
    const double s = std::sqrt(disc);
    const double hi = uc + s;
    if (hi <= 0.0) return 0.0;
    const double lo = std::max(0.0, uc - s);
    return 0.5 * (hi * hi - lo * lo);
  };
  // Split at the tangent directions, where the integrand has sqrt kinks.
  std::vector<double> cuts{0.0, angle};
  if (c2 > R2) {
    const double base = std::atan2(c.y(), c.x());
    const double half = std::asin(std::sqrt(R2 / c2));
    for (double t : {base - half, base + half}) {
      for (int k = -2; k <= 2; ++k) {
        const double v = t + 2.0 * kPi * k;
        if (v > 0.0 && v < angle) cuts.push_back(v);
      }
    }
  }
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  const double tol = 1e-12 * std::max(R2, 1e-300);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += integrate(slice, cuts[i], cuts[i + 1], tol);
  return total;
}

double cone_ball_area(const MinimalCone& Z, const Ball& B) {
  const double r = B.radius;
  const Vec3 c = Z.to_local(B.center);
  if (c.norm() <= 1e-12 * r) return density(Z.kind()) * r * r;
  double total = 0.0;
  for (const Face& f : Z.local_faces()) {
    const double h = c.dot(f.normal());
    if (std::abs(h) >= r) continue;
    const double rho = std::sqrt(r * r - h * h);
    total += wedge_disk_area(Eigen::Vector2d(c.dot(f.e_a), c.dot(f.e_b)), rho, f.angle);
  }
  return total;
}

DiscreteSet sample_cone(const MinimalCone& Z, const Ball& B, double spacing) {
  if (!(spacing > 0.0) || !(spacing < B.radius))
    throw std::invalid_argument("sample_cone: need 0 < spacing < radius");
  DiscreteSet E;
  E.spacing = spacing;
  const Vec3 c = Z.to_local(B.center);
  const double r = B.radius;
  constexpr int kSub = 4;
  for (const Face& f : Z.local_faces()) {
    const double h = c.dot(f.normal());
    if (std::abs(h) >= r) continue;
    const double rho = std::sqrt(r * r - h * h);
    const double cx = c.dot(f.e_a), cy = c.dot(f.e_b);
    const long i0 = static_cast<long>(std::floor((cx - rho) / spacing));
    const long i1 = static_cast<long>(std::floor((cx + rho) / spacing));
    const long j0 = static_cast<long>(std::floor((cy - rho) / spacing));
    const long j1 = static_cast<long>(std::floor((cy + rho) / spacing));
    const double rho2 = rho * rho;
    for (long j = j0; j <= j1; ++j) {
      for (long i = i0; i <= i1; ++i) {
        int inside = 0;
        double sx = 0.0, sy = 0.0;
        for (int b = 0; b < kSub; ++b) {
          for (int a = 0; a < kSub; ++a) {
            const double x = (i + (a + 0.5) / kSub) * spacing;
            const double y = (j + (b + 0.5) / kSub) * spacing;
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) > rho2) continue;
            if (!in_wedge_strict(x, y, f.angle)) continue;
            ++inside;
            sx += x;
            sy += y;
          }
        }
        if (inside == 0) continue;
        const double x = sx / inside, y = sy / inside;
        const double w = spacing * spacing * inside / (kSub * kSub);
        E.add(Z.to_world(x * f.e_a + y * f.e_b), w);
      }
    }
  }
  return E;
}

// ---------------------------------------------------------------------------

namespace {

double distance_to_ray(const Vec3& p, const Vec3& d) { return (p - std::max(0.0, p.dot(d)) * d).norm(); }

// Y cone whose spine is the line through `point` with direction A_j of the
// tetrahedron, with faces along the three T faces meeting at that ray.
MinimalCone y_along_tetra_ray(const MinimalCone& T, int j, const Vec3& local_point) {
  const auto& A = tetra_vertices();
  const Vec3 axis = A[j];
  const int k = (j == 0) ? 1 : 0;
  const Vec3 w = (A[k] - A[k].dot(axis) * axis).normalized();
  Mat3 local;
  local.col(0) = w;
  local.col(1) = axis.cross(w);
  local.col(2) = axis;
  return MinimalCone(ConeKind::Y, T.to_world(local_point), T.orientation() * local);
}

MinimalCone plane_of_face(const MinimalCone& Z, const Face& f, const Vec3& local_point) {
  Mat3 local;
  local.col(0) = f.e_a;
  local.col(1) = f.e_b;
  local.col(2) = f.normal();
  return MinimalCone(ConeKind::P, Z.to_world(local_point), Z.orientation() * local);
}

}  // namespace

Recentered recenter(const MinimalCone& Z, const Vec3& x, double r0, double V) {
  if (!(r0 > 0.0) || !(V >= 1.0)) throw std::invalid_argument("recenter: need r0 > 0 and V >= 1");
  if (distance_to_cone(x, Z) > 1e-9 * r0) throw std::invalid_argument("recenter: x is not on the cone");
  const Vec3 p = Z.to_local(x);
  const auto& faces = Z.local_faces();

  auto nearest_face = [&]() -> std::size_t {
    std::size_t best = 0;
    double bd = kInf;
    for (std::size_t i = 0; i < faces.size(); ++i) {
      const double d = (p - nearest_on_face(p, faces[i])).norm();
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    return best;
  };

  for (double r1 : {r0, V * r0, V * V * r0}) {
    switch (Z.kind()) {
      case ConeKind::P:
        return {r1, Z.with_apex(x)};
      case ConeKind::Y: {
        const Vec3 foot(0.0, 0.0, p.z());
        const double ds = (p - foot).norm();
        if (ds <= r1 / V) return {r1, Z.with_apex(Z.to_world(foot))};
        if (ds >= r1) {
          const Face& f = faces[nearest_face()];
          return {r1, plane_of_face(Z, f, nearest_on_face(p, f))};
        }
        break;
      }
      case ConeKind::T: {
        const double da = p.norm();
        if (da <= r1 / V) return {r1, Z};
        if (da < r1) break;
        const auto& A = tetra_vertices();
        std::vector<int> rays;
        for (int j = 0; j < 4; ++j)
          if (distance_to_ray(p, A[j]) < r1) rays.push_back(j);
        std::vector<std::size_t> seen;
        for (std::size_t i = 0; i < faces.size(); ++i)
          if ((p - nearest_on_face(p, faces[i])).norm() < r1) seen.push_back(i);
        if (rays.empty()) {
          if (seen.size() == 1) return {r1, plane_of_face(Z, faces[seen[0]], nearest_on_face(p, faces[seen[0]]))};
          break;
        }
        if (rays.size() == 1) {
          const int j = rays[0];
          const auto& edges = kTetraEdges;
          const bool faces_ok = std::all_of(seen.begin(), seen.end(), [&](std::size_t fi) {
            return edges[fi].first == j || edges[fi].second == j;
          });
          const Vec3 foot = p.dot(A[j]) * A[j];
          if (faces_ok && (p - foot).norm() <= r1 / V) return {r1, y_along_tetra_ray(Z, j, foot)};
        }
        break;
      }
    }
  }
  throw std::runtime_error("recenter: no admissible radius (V too close to 1)");
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const MinimalCone& Z) {
  const auto q = quaternion_from_rotation(Z.orientation());
  j = nlohmann::json{{"kind", std::string(to_string(Z.kind()))},
                     {"apex", {Z.apex().x(), Z.apex().y(), Z.apex().z()}},
                     {"quaternion", {q[0], q[1], q[2], q[3]}}};
}

MinimalCone cone_from_json(const nlohmann::json& j) {
  const ConeKind kind = parse_cone_kind(j.at("kind").get<std::string>());
  const auto a = j.at("apex").get<std::vector<double>>();
  const auto q = j.at("quaternion").get<std::vector<double>>();
  if (a.size() != 3 || q.size() != 4) throw std::invalid_argument("cone JSON: apex needs 3 and quaternion 4 entries");
  return MinimalCone(kind, Vec3(a[0], a[1], a[2]), rotation_from_quaternion({q[0], q[1], q[2], q[3]}));
}

}  // namespace mslab
