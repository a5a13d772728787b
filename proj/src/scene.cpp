#include "mslab/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace mslab {

namespace {

Vec3 bend_axis(const SceneSpec& s) {
  if (s.bend_direction.squaredNorm() > 0.0) return s.bend_direction.normalized();
  return s.orientation.col(2);
}

// Uniform in [-1, 1) from the raw 64-bit stream, independent of the
// standard library's distribution implementations.
double symmetric_unit(std::mt19937_64& rng) {
  return 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
}

void validate(const SceneSpec& s) {
  if (s.grid < 2 || s.grid > 1024) throw std::invalid_argument("scene: grid must be in [2, 1024]");
  if (!s.contrasts.empty() && static_cast<int>(s.contrasts.size()) != sector_count(s.kind))
    throw std::invalid_argument("scene: need one contrast per sector (" + std::to_string(sector_count(s.kind)) + ")");
  if (!(s.noise >= 0.0)) throw std::invalid_argument("scene: noise must be >= 0");
  if (!(s.supersample >= 1 && s.supersample <= 16)) throw std::invalid_argument("scene: supersample must be in [1, 16]");
  if (!(s.bend >= 0.0) || s.bend > 0.25) throw std::invalid_argument("scene: bend must be in [0, 0.25]");
  if (!(s.gauge_constant >= 0.0)) throw std::invalid_argument("scene: gauge constant must be >= 0");
  if (!is_rotation(s.orientation, 1e-9)) throw std::invalid_argument("scene: orientation is not a rotation");
  for (const Bump& b : s.bumps)
    if (!(b.diameter > 0.0)) throw std::invalid_argument("scene: bump diameter must be positive");
  for (const Hole& h : s.holes)
    if (!(h.radius > 0.0)) throw std::invalid_argument("scene: hole radius must be positive");
  for (double c : s.contrasts)
    if (!std::isfinite(c)) throw std::invalid_argument("scene: non-finite contrast");
}

double contrast(const SceneSpec& s, int sector) {
  return s.contrasts.empty() ? static_cast<double>(sector) : s.contrasts[static_cast<std::size_t>(sector)];
}

}  // namespace

Vec3 scene_displacement(const SceneSpec& s, const Vec3& q) {
  double amount = s.bend * (q - s.apex).squaredNorm();
  for (const Bump& b : s.bumps) {
    const double d = (q - b.center).norm();
    if (d < 0.5 * b.diameter) {
      const double c = std::cos(std::numbers::pi * d / b.diameter);
      amount += 0.1 * b.diameter * c * c;
    }
  }
  return amount * bend_axis(s);
}

Vec3 scene_preimage(const SceneSpec& s, const Vec3& p) {
  if (s.bend == 0.0 && s.bumps.empty()) return p;
  Vec3 q = p;
  for (int it = 0; it < 60; ++it) {
    const Vec3 next = p - scene_displacement(s, q);
    if ((next - q).norm() <= 1e-15) return next;
    q = next;
  }
  return q;
}

int scene_sector(const SceneSpec& s, const Vec3& p) {
  const MinimalCone Z(s.kind, s.apex, s.orientation);
  return Z.sector(scene_preimage(s, p));
}

DiscreteSet scene_singular_set(const SceneSpec& s, double spacing) {
  validate(s);
  const MinimalCone Z(s.kind, s.apex, s.orientation);
  const Vec3 mid = Vec3::Constant(0.5);
  double reach = std::sqrt(3.0) / 2.0 + 2.0 * spacing;
  const double far = (s.apex - mid).norm() + 1.0;
  reach += s.bend * far * far;
  for (const Bump& b : s.bumps) reach += 0.1 * b.diameter;
  const DiscreteSet base = sample_cone(Z, Ball(mid, reach), spacing);

  DiscreteSet K;
  K.spacing = spacing;
  const bool warped = s.bend != 0.0 || !s.bumps.empty();
  const double fd = 1e-6;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const Vec3& q = base.points[i];
    const Vec3 p = q + scene_displacement(s, q);
    if ((p.array() < 0.0).any() || (p.array() > 1.0).any()) continue;
    bool in_hole = false;
    for (const Hole& h : s.holes)
      if ((p - h.center).norm() < h.radius) in_hole = true;
    if (in_hole) continue;
    double w = base.weights[i];
    if (warped) {
      const Face& f = Z.local_faces()[nearest_face_index(q, Z)];
      const Vec3 t1 = Z.orientation() * f.e_a, t2 = Z.orientation() * f.e_b;
      auto push = [&](const Vec3& t) {
        return t + (scene_displacement(s, q + fd * t) - scene_displacement(s, q - fd * t)) / (2.0 * fd);
      };
      w *= push(t1).cross(push(t2)).norm();
    }
    K.add(p, w);
  }
  return K;
}

Scene make_scene(const SceneSpec& spec) {
  validate(spec);
  Scene sc;
  sc.spec = spec;
  sc.cone = MinimalCone(spec.kind, spec.apex, spec.orientation);
  sc.g = ScalarGrid::unit_cube(spec.grid);
  std::mt19937_64 rng(spec.seed);
  const int ss = spec.mode == SceneMode::PhaseField ? spec.supersample : 1;
  const double h = sc.g.spacing;
  for (std::size_t c = 0; c < sc.g.size(); ++c) {
    const Vec3 p = sc.g.position(c);
    const int sector = scene_sector(spec, p);
    double v = contrast(spec, sector);
    if (ss > 1) {
      bool cut = false;
      for (int k = 0; k < 8 && !cut; ++k) {
        const Vec3 corner = p + 0.5 * h * Vec3(k & 1 ? 1 : -1, k & 2 ? 1 : -1, k & 4 ? 1 : -1);
        cut = scene_sector(spec, corner) != sector;
      }
      if (cut) {
        double sum = 0.0;
        for (int i = 0; i < ss; ++i)
          for (int j = 0; j < ss; ++j)
            for (int k = 0; k < ss; ++k) {
              const Vec3 q = p + h * (Vec3(i + 0.5, j + 0.5, k + 0.5) / ss - Vec3::Constant(0.5));
              sum += contrast(spec, scene_sector(spec, q));
            }
        v = sum / (ss * ss * ss);
      }
    }
    v += spec.gradient.dot(p - spec.apex);
    if (spec.noise > 0.0) v += spec.noise * symmetric_unit(rng);
    sc.g.values[c] = v;
  }
  sc.gauge_constant = spec.gauge_constant * sc.g.max_abs() * sc.g.max_abs();
  if (spec.mode == SceneMode::Exact) sc.K = scene_singular_set(spec, sc.g.spacing);
  return sc;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from(const nlohmann::json& j, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument(std::string("scene: ") + what + " needs 3 entries");
  return Vec3(v[0], v[1], v[2]);
}

}  // namespace

void to_json(nlohmann::json& j, const SceneSpec& s) {
  const auto q = quaternion_from_rotation(s.orientation);
  j = nlohmann::json{{"name", s.name},
                     {"mode", s.mode == SceneMode::Exact ? "exact" : "phase_field"},
                     {"kind", std::string(to_string(s.kind))},
                     {"apex", vec_json(s.apex)},
                     {"quaternion", {q[0], q[1], q[2], q[3]}},
                     {"contrasts", s.contrasts},
                     {"gradient", vec_json(s.gradient)},
                     {"bend", s.bend},
                     {"bend_direction", vec_json(s.bend_direction)},
                     {"noise", s.noise},
                     {"seed", s.seed},
                     {"supersample", s.supersample},
                     {"grid", s.grid},
                     {"gauge_constant", s.gauge_constant}};
  nlohmann::json bumps = nlohmann::json::array(), holes = nlohmann::json::array();
  for (const Bump& b : s.bumps) bumps.push_back({{"center", vec_json(b.center)}, {"diameter", b.diameter}});
  for (const Hole& h : s.holes) holes.push_back({{"center", vec_json(h.center)}, {"radius", h.radius}});
  j["bumps"] = bumps;
  j["holes"] = holes;
}

SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  SceneSpec s;
  if (!j.is_object()) throw std::invalid_argument("scene: expected a JSON object");
  s.name = j.value("name", s.name);
  const std::string mode = j.value("mode", std::string("phase_field"));
  if (mode == "exact") s.mode = SceneMode::Exact;
  else if (mode == "phase_field") s.mode = SceneMode::PhaseField;
  else throw std::invalid_argument("scene: unknown mode '" + mode + "'");
  if (j.contains("kind")) s.kind = parse_cone_kind(j.at("kind").get<std::string>());
  if (j.contains("apex")) s.apex = vec_from(j.at("apex"), "apex");
  if (j.contains("quaternion")) {
    const auto q = j.at("quaternion").get<std::vector<double>>();
    if (q.size() != 4) throw std::invalid_argument("scene: quaternion needs 4 entries");
    s.orientation = rotation_from_quaternion({q[0], q[1], q[2], q[3]});
  } else if (j.contains("axis_angle")) {
    s.orientation = rotation_from_axis_angle(vec_from(j.at("axis_angle"), "axis_angle"));
  }
  s.contrasts = j.value("contrasts", std::vector<double>{});
  if (j.contains("gradient")) s.gradient = vec_from(j.at("gradient"), "gradient");
  s.bend = j.value("bend", 0.0);
  if (j.contains("bend_direction")) s.bend_direction = vec_from(j.at("bend_direction"), "bend_direction");
  s.noise = j.value("noise", 0.0);
  s.seed = j.value("seed", std::uint64_t{1});
  s.supersample = j.value("supersample", 4);
  s.grid = j.value("grid", 64);
  s.gauge_constant = j.value("gauge_constant", kDefaultGaugeConstant);
  for (const auto& b : j.value("bumps", nlohmann::json::array()))
    s.bumps.push_back({vec_from(b.at("center"), "bump center"), b.at("diameter").get<double>()});
  for (const auto& h : j.value("holes", nlohmann::json::array()))
    s.holes.push_back({vec_from(h.at("center"), "hole center"), h.at("radius").get<double>()});
  validate(s);
  return s;
}

}  // namespace mslab
