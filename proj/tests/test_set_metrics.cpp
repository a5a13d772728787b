#include "doctest.h"

#include "mslab/set_metrics.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace mslab;

namespace {

constexpr double kPi = std::numbers::pi;

// Lower bound of max_{y in T0 cap B(0,1)} |y . n| over unit normals n, from a
// 4e5-point Fibonacci sweep of normals against finely sampled edge arcs
// (1-Lipschitz in n, covering radius < 5e-3). Computed offline with numpy.
constexpr double kPlaneToTetraBeta = 0.86627;

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  return Vec3(N(rng), N(rng), N(rng)).normalized();
}

double brute_unilateral(const DiscreteSet& E, const MinimalCone& Z, const Ball& B) {
  double m = 0.0;
  for (const Vec3& p : E.points)
    if ((p - B.center).norm() <= B.radius) m = std::max(m, distance_to_cone(p, Z));
  return m / B.radius;
}

double brute_directed(const DiscreteSet& A, const DiscreteSet& C, const Ball& B) {
  double m = 0.0;
  for (const Vec3& p : A.points) {
    if (!B.contains(p)) continue;
    double best = 1e300;
    for (const Vec3& q : C.points)
      if (B.contains(q)) best = std::min(best, (p - q).norm());
    m = std::max(m, best);
  }
  return m;
}

DiscreteSet random_cloud(std::mt19937_64& rng, int n, double spacing) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  DiscreteSet E;
  E.spacing = spacing;
  while (static_cast<int>(E.size()) < n) {
    const Vec3 p(U(rng), U(rng), U(rng));
    if (p.norm() <= 1.0) E.add(p, spacing * spacing);
  }
  return E;
}

}  // namespace

TEST_CASE("unilateral distance examples") {
  const Ball B(Vec3::Zero(), 1.0);
  const MinimalCone P = MinimalCone::canonical(ConeKind::P);
  const DiscreteSet E = sample_cone(P, B, 0.05);
  CHECK(unilateral_distance(E, P, B) <= 0.05);
  DiscreteSet one;
  one.add(Vec3(0, 0, 0.3), 1.0);
  CHECK(unilateral_distance(one, P, B) == doctest::Approx(0.3));
  DiscreteSet empty;
  CHECK(unilateral_distance(empty, P, B) == 0.0);

  // Y0 sample with uniform noise of amplitude 0.02 along random directions.
  const MinimalCone Y = MinimalCone::canonical(ConeKind::Y);
  DiscreteSet noisy = sample_cone(Y, B, 0.02);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const double delta = 0.02;
  for (Vec3& p : noisy.points) p += delta * U(rng) * random_unit(rng);
  const double u = unilateral_distance(noisy, Y, B);
  CHECK(u == brute_unilateral(noisy, Y, B));
  CHECK(u >= 0.8 * delta);
  CHECK(u <= delta);
}

TEST_CASE("hausdorff examples") {
  const Ball B(Vec3(0.1, 0.2, 0.3), 1.0);
  DiscreteSet a, b;
  a.spacing = b.spacing = 0.1;
  a.add(B.center, 1.0);
  b.add(B.center + Vec3(1, 0, 0), 1.0);
  CHECK(*hausdorff(a, b, B) == doctest::Approx(1.0));
  CHECK(*hausdorff(a, a, B) == 0.0);
  DiscreteSet none;
  none.spacing = 0.1;
  CHECK_FALSE(hausdorff(a, none, B).has_value());
  DiscreteSet far;
  far.spacing = 0.1;
  far.add(Vec3(5, 5, 5), 1.0);
  CHECK_FALSE(hausdorff(a, far, B).has_value());

  // plane against the same plane offset by 0.1 r, brute force on small samples
  const double s = 0.05;
  const Ball U(Vec3::Zero(), 1.0);
  const DiscreteSet p0 = sample_cone(MinimalCone::canonical(ConeKind::P), Ball(Vec3::Zero(), 1.2), s);
  const DiscreteSet p1 = sample_cone(MinimalCone(ConeKind::P, Vec3(0, 0, 0.1), Mat3::Identity()), Ball(Vec3::Zero(), 1.2), s);
  const double h = *hausdorff(p0, p1, U);
  CHECK(std::abs(h - 0.1) <= s);
  CHECK(h == doctest::Approx(std::max(brute_directed(p0, p1, U), brute_directed(p1, p0, U))).epsilon(1e-12));
}

TEST_CASE("hausdorff symmetry and triangle inequality") {
  std::mt19937_64 rng(12);
  const Ball B(Vec3::Zero(), 1.0);
  const double s = 0.1;
  for (int it = 0; it < 20; ++it) {
    const DiscreteSet a = random_cloud(rng, 300, s), b = random_cloud(rng, 300, s), c = random_cloud(rng, 300, s);
    const double ab = *hausdorff(a, b, B), ba = *hausdorff(b, a, B);
    CHECK(ab == ba);
    CHECK(ab == doctest::Approx(std::max(brute_directed(a, b, B), brute_directed(b, a, B))).epsilon(1e-12));
    CHECK(*hausdorff(a, c, B) <= ab + *hausdorff(b, c, B) + 2.0 * s);
  }
}

TEST_CASE("unilateral is bounded by hausdorff to a cone sample") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const double s = 0.05;
  for (ConeKind kind : {ConeKind::P, ConeKind::Y, ConeKind::T}) {
    for (int it = 0; it < 5; ++it) {
      const MinimalCone Z(kind, 0.2 * Vec3(U(rng), U(rng), U(rng)), random_rotation(rng));
      const Ball B(Vec3::Zero(), 1.0);
      DiscreteSet E = sample_cone(Z, B, s);
      for (Vec3& p : E.points) p += 0.03 * U(rng) * random_unit(rng);
      const auto h = hausdorff(E, sample_cone(Z, B, s), B);
      REQUIRE(h.has_value());
      CHECK(unilateral_distance(E, Z, B) <= *h + s);
    }
  }
}

TEST_CASE("fit_cone recovers exact cones") {
  const double s = 0.02;
  const Ball B(Vec3::Zero(), 1.0);
  std::mt19937_64 rng(21);
  SUBCASE("plane through x") {
    const MinimalCone Z(ConeKind::P, Vec3::Zero(), random_rotation(rng));
    const ConeFit fit = fit_cone(sample_cone(Z, B, s), B, {ConeKind::P}, Vec3::Zero());
    CHECK(fit.cone.kind() == ConeKind::P);
    CHECK(fit.beta <= s);
    CHECK(fit.beta <= 2.0 * fit.coarse_beta + 1e-15);
  }
  SUBCASE("plane cannot approximate T") {
    const DiscreteSet E = sample_cone(MinimalCone::canonical(ConeKind::T), B, s);
    const ConeFit fit = fit_cone(E, B, {ConeKind::P}, Vec3::Zero());
    CHECK(fit.beta >= 0.2);
    CHECK(fit.beta >= kPlaneToTetraBeta - 0.005 - s);
    CHECK(fit.beta <= kPlaneToTetraBeta + 0.01);
    CHECK(fit.beta == doctest::Approx(unilateral_distance(E, fit.cone, B)));
    CHECK(distance_to_cone(Vec3::Zero(), fit.cone) < 1e-12);
  }
  SUBCASE("rotated Y among all kinds") {
    const MinimalCone Z(ConeKind::Y, Vec3::Zero(), random_rotation(rng));
    const ConeFit fit = fit_cone(sample_cone(Z, B, s), B, {ConeKind::P, ConeKind::Y, ConeKind::T}, Vec3::Zero());
    CHECK(fit.cone.kind() == ConeKind::Y);
    CHECK(fit.beta <= 2.0 * s);
    CHECK(fit.kind_searched.size() == 3);
  }
  SUBCASE("empty restriction") {
    DiscreteSet far;
    far.add(Vec3(5, 0, 0), 1.0);
    CHECK_THROWS_AS(fit_cone(far, B, {ConeKind::P}, Vec3::Zero()), std::invalid_argument);
  }
}

TEST_CASE("fit_cone with an off-center constraint keeps it on the cone") {
  const double s = 0.03;
  const Ball B(Vec3(0.1, 0.0, 0.0), 1.0);
  const MinimalCone Z(ConeKind::Y, Vec3(0.3, 0.1, -0.2), rotation_from_axis_angle(Vec3(0.3, -0.5, 0.2)));
  const Vec3 x = nearest_point_on_cone(B.center, Z);
  const ConeFit fit = fit_cone(sample_cone(Z, B, s), B, {ConeKind::P, ConeKind::Y}, x);
  CHECK(distance_to_cone(x, fit.cone) < 1e-12);
  CHECK(fit.cone.kind() == ConeKind::Y);
  CHECK(fit.beta <= 2.0 * s);
}

TEST_CASE("fit_cone is rigid-motion equivariant") {
  const double s = 0.03;
  std::mt19937_64 rng(31);
  for (ConeKind kind : {ConeKind::P, ConeKind::Y, ConeKind::T}) {
    const Ball B(Vec3::Zero(), 1.0);
    const MinimalCone Z(kind, Vec3::Zero(), random_rotation(rng));
    const DiscreteSet E = sample_cone(Z, B, s);
    const Mat3 R = random_rotation(rng);
    const Vec3 t(0.3, -0.1, 0.2);
    DiscreteSet RE = E;
    for (Vec3& p : RE.points) p = R * p + t;
    const ConeFit a = fit_cone(E, B, {kind}, Vec3::Zero());
    const ConeFit b = fit_cone(RE, Ball(t, 1.0), {kind}, t);
    CHECK_MESSAGE(std::abs(a.beta - b.beta) <= 1e-6, to_string(kind) << " " << a.beta << " " << b.beta);
    // the transported fit is as good for R(E) as the direct one
    CHECK(unilateral_distance(RE, a.cone.transformed(R, t), Ball(t, 1.0)) == doctest::Approx(a.beta).epsilon(1e-9));
  }
}

TEST_CASE("separating_check on cone samples") {
  const Ball B(Vec3::Zero(), 1.0);
  const double s = 0.04;
  const double eps0 = 0.05;
  std::mt19937_64 rng(41);
  for (ConeKind kind : {ConeKind::P, ConeKind::Y, ConeKind::T}) {
    const MinimalCone Z(kind, Vec3::Zero(), random_rotation(rng));
    const SeparationReport rep = separating_check(sample_cone(Z, B, s), B, Z, eps0);
    CHECK(rep.status == SeparationStatus::Separating);
    CHECK(rep.separating);
    CHECK(rep.component_count == type_index(kind) + 1);
    const auto& d = rep.labels.dims;
    CHECK(rep.labels.labels.size() == static_cast<std::size_t>(d[0]) * d[1] * d[2]);
  }
}

TEST_CASE("separating_check detects a hole") {
  const Ball B(Vec3::Zero(), 1.0);
  const double s = 0.04;
  const MinimalCone P = MinimalCone::canonical(ConeKind::P);
  const DiscreteSet full = sample_cone(P, B, s);
  DiscreteSet holed;
  holed.spacing = s;
  for (std::size_t i = 0; i < full.size(); ++i)
    if ((full.points[i] - Vec3(0.3, 0.2, 0.0)).norm() > 0.2) holed.add(full.points[i], full.weights[i]);
  const SeparationReport rep = separating_check(holed, B, P, 0.05);
  CHECK(rep.status == SeparationStatus::NotSeparating);
  CHECK_FALSE(rep.separating);
  CHECK(rep.component_count == 2);

  DiscreteSet off = full;
  off.add(Vec3(0, 0, 0.5), s * s);
  CHECK(separating_check(off, B, P, 0.05).status == SeparationStatus::PreconditionViolated);
}

TEST_CASE("discrete area and excess density") {
  const Ball B(Vec3::Zero(), 1.0);
  const double s = 0.02;
  const MinimalCone P = MinimalCone::canonical(ConeKind::P);
  const MinimalCone Y = MinimalCone::canonical(ConeKind::Y);
  // sample on a larger ball so that the unit ball sits inside the sample
  const DiscreteSet ep = sample_cone(P, Ball(Vec3::Zero(), 1.5), s);
  const DiscreteSet ey = sample_cone(Y, Ball(Vec3::Zero(), 1.5), s);
  CHECK(discrete_area(ep, B) == doctest::Approx(kPi).epsilon(0.02));
  CHECK(discrete_area(ey, B) == doctest::Approx(1.5 * kPi).epsilon(0.02));
  CHECK(discrete_area(DiscreteSet{}, B) == 0.0);
  CHECK(std::abs(excess_density(ep, Vec3::Zero(), 1.0, ConeKind::P)) <= 0.02 * kPi);
  CHECK(excess_density(ey, Vec3::Zero(), 1.0, ConeKind::P) == doctest::Approx(kPi / 2).epsilon(0.02));

  // Spurious spherical patch: cap of the sphere |y - c| = 0.3 with polar angle
  // below 1, area 2 pi R^2 (1 - cos 1).
  DiscreteSet with_cap = ep;
  const Vec3 c(0.0, 0.0, 0.5);
  const double R = 0.3;
  const int n = 200;
  double cap_area = 0.0;
  for (int i = 0; i < n; ++i) {
    const double th = (i + 0.5) / n;
    for (int j = 0; j < 4 * n; ++j) {
      const double ph = 2.0 * kPi * (j + 0.5) / (4 * n);
      const double w = R * R * std::sin(th) * (1.0 / n) * (2.0 * kPi / (4 * n));
      with_cap.add(c + R * Vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)), w);
      cap_area += w;
    }
  }
  const double a = 2.0 * kPi * R * R * (1.0 - std::cos(1.0));
  CHECK(cap_area == doctest::Approx(a).epsilon(1e-3));
  const double f = excess_density(with_cap, Vec3::Zero(), 1.0, ConeKind::P);
  CHECK(std::abs(f - a) <= 0.02 * kPi);

  // Scaling: exact apex-centered samples have zero excess at every radius
  // inside the sampled region.
  const DiscreteSet et = sample_cone(MinimalCone::canonical(ConeKind::T), Ball(Vec3::Zero(), 1.5), s);
  for (double r : {0.25, 0.5, 1.0, 1.4})
    CHECK(std::abs(excess_density(et, Vec3::Zero(), r, ConeKind::T)) <= 0.02 * density(ConeKind::T));
}

TEST_CASE("fit and separation JSON") {
  ConeFit fit;
  fit.beta = 0.125;
  fit.kind_searched = {ConeKind::P, ConeKind::T};
  nlohmann::json j = fit;
  CHECK(j["beta"] == 0.125);
  CHECK(j["kind_searched"][1] == "T");
  SeparationReport rep;
  rep.status = SeparationStatus::PreconditionViolated;
  nlohmann::json k = rep;
  CHECK(k["status"] == "precondition_violated");
}
