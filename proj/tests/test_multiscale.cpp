#include "doctest.h"

#include "mslab/multiscale.hpp"
#include "mslab/phase_field.hpp"
#include "mslab/scene.hpp"

#include <cmath>
#include <random>

using namespace mslab;

namespace {

const std::vector<ConeKind> kAll{ConeKind::P, ConeKind::Y, ConeKind::T};

Scene exact_scene(ConeKind kind, int grid, std::vector<double> contrasts = {}) {
  SceneSpec s;
  s.mode = SceneMode::Exact;
  s.kind = kind;
  s.grid = grid;
  s.orientation = rotation_from_axis_angle(Vec3(0.3, -0.2, 0.15));
  s.contrasts = std::move(contrasts);
  return make_scene(s);
}

Scene bump_scene(std::vector<Bump> bumps) {
  SceneSpec s;
  s.mode = SceneMode::Exact;
  s.kind = ConeKind::P;
  s.grid = 64;
  s.bumps = std::move(bumps);
  return make_scene(s);
}

StoppingDecomposition family(std::vector<BadBall> balls) {
  StoppingDecomposition S;
  S.balls = std::move(balls);
  return S;
}

// Field on [-1.5, 1.5]^3 at spacing 1/16 with u = 1 below the plane x3 = 0.
ScalarGrid plane_jump_field(double below, double above) {
  const double h = 1.0 / 16;
  ScalarGrid u({48, 48, 48}, h, Vec3::Constant(-1.5 + h / 2));
  for (std::size_t i = 0; i < u.size(); ++i) u.values[i] = u.position(i).z() < 0.0 ? below : above;
  return u;
}

}  // namespace

TEST_CASE("jump across a plane crack") {
  const ScalarGrid u = plane_jump_field(1.0, 0.0);
  const Ball B(Vec3::Zero(), 1.0);
  const DiscreteSet K = sample_cone(MinimalCone::canonical(ConeKind::P), Ball(Vec3::Zero(), 1.2), 1.0 / 16);
  const ConeFit fit = fit_cone(K, B, {ConeKind::P}, Vec3::Zero());
  const JumpReport j = jump(u, K, B, fit);
  REQUIRE(j.defined());
  REQUIRE(j.domains.size() == 2);
  CHECK(j.deltas.size() == 1);
  CHECK(j.deltas[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(j.J == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(j.fallback == 1);
  for (const JumpDomain& D : j.domains) {
    CHECK(D.ball.radius == doctest::Approx(0.1));
    CHECK((D.ball.center - B.center).norm() <= 0.9 + 1e-12);
    CHECK(distance_to_cone(D.ball.center, fit.cone) > 0.5);
  }

  const JumpReport flat = jump(plane_jump_field(0.3, 0.3), K, B, fit);
  REQUIRE(flat.defined());
  CHECK(flat.J == 0.0);
  CHECK_THROWS_AS(jump(u, K, Ball(Vec3::Zero(), 1.6), fit), std::invalid_argument);
}

TEST_CASE("jump statuses") {
  const ScalarGrid u = plane_jump_field(1.0, 0.0);
  const DiscreteSet K = sample_cone(MinimalCone::canonical(ConeKind::P), Ball(Vec3::Zero(), 1.2), 1.0 / 16);
  ConeFit far;
  far.cone = MinimalCone(ConeKind::P, Vec3(0, 0, 0.9), Mat3::Identity());
  CHECK(jump(u, K, Ball(Vec3::Zero(), 0.5), far).status == JumpStatus::SingleComponent);
  ConeFit loose;
  loose.beta = 0.2;
  CHECK(jump(u, K, Ball(Vec3::Zero(), 0.5), loose).status == JumpStatus::BetaTooLarge);
  CHECK_FALSE(jump(u, K, Ball(Vec3::Zero(), 0.5), loose).defined());
}

TEST_CASE("jump on a three-sector scene takes the smallest contrast") {
  const Scene sc = exact_scene(ConeKind::Y, 64, {0.0, 1.0, 5.0});
  const Ball B(sc.spec.apex, 0.3);
  const ConeFit fit = fit_cone(sc.K, B, kAll, sc.spec.apex);
  const JumpReport j = jump(sc.g, sc.K, B, fit);
  REQUIRE(j.defined());
  CHECK(j.domains.size() == 3);
  CHECK(j.min_delta == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(j.J == doctest::Approx(1.0 / std::sqrt(0.3)).epsilon(1e-12));
  const auto js = nlohmann::json(j);
  CHECK(js["status"] == "defined");
  CHECK(js["domains"].size() == 3);
}

TEST_CASE("jump scale law on sector-constant scenes") {
  for (ConeKind kind : {ConeKind::Y, ConeKind::T}) {
    const Scene sc = exact_scene(kind, 64, kind == ConeKind::Y ? std::vector<double>{0.0, 1.0, 2.5}
                                                               : std::vector<double>{0.0, 1.0, 2.5, 4.0});
    const Vec3 x = sc.spec.apex;
    std::vector<double> radii{0.4, 0.2, 0.1, 0.05}, J;
    for (double r : radii) {
      const Ball B(x, r);
      const JumpReport j = jump(sc.g, sc.K, B, fit_cone(sc.K, B, kAll, x));
      REQUIRE(j.defined());
      CHECK(j.fallback == 1);
      J.push_back(j.J);
    }
    for (std::size_t i = 1; i < radii.size(); ++i)
      CHECK(std::abs(std::sqrt(radii[i] / radii[0]) * J[i] - J[0]) <= 1e-6 * J[0]);
  }
}

TEST_CASE("jump falls back to a larger ball when the cone is off centre") {
  const Scene sc = exact_scene(ConeKind::Y, 64, {0.0, 1.0, 2.0});
  const Vec3 x = sc.cone.apex() + 0.12 * (sc.cone.orientation() * y_directions()[0]);
  const Ball B(x, 0.15);
  const ConeFit fit = fit_cone(sc.K, B, kAll, x);
  REQUIRE(fit.cone.kind() == ConeKind::Y);
  CHECK_FALSE(almost_centered(fit.cone, B));
  const JumpReport j = jump(sc.g, sc.K, B, fit);
  REQUIRE(j.defined());
  CHECK(j.fallback == 2);
  CHECK(j.ball.radius == doctest::Approx(0.3));
  CHECK(j.J == doctest::Approx(1.0 / std::sqrt(0.3)).epsilon(1e-9));
}

TEST_CASE("good balls") {
  const MultiscaleParams p;
  const Scene y = exact_scene(ConeKind::Y, 64);
  const double s = y.K.spacing;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const Vec3 c = y.K.points[rng() % y.K.size()];
    const double r = 10.0 * s * (1.0 + static_cast<double>(rng() % 100) / 50.0);
    CHECK(good_ball(y.K, no_surplus(), Ball(c, r), p).good);
  }

  // Plane with an orthogonal flap of size 0.3 r through the centre.
  const double r = 0.3;
  const Vec3 x(0.5, 0.5, 0.5);
  DiscreteSet E = sample_cone(MinimalCone(ConeKind::P, x, Mat3::Identity()), Ball(x, 0.45), 0.01);
  for (double a = -0.3 * r; a <= 0.3 * r + 1e-12; a += 0.01)
    for (double b = 0.01; b <= 0.3 * r + 1e-12; b += 0.01) E.add(x + Vec3(0.0, a, b), 1e-4);
  const GoodBallReport flap = good_ball(E, no_surplus(), Ball(x, r), p);
  CHECK_FALSE(flap.good);
  CHECK(flap.failed == BallClause::Cone);
  CHECK(flap.beta > p.eps0);

  const SurplusFn injected = [&](const Ball& B) { return 2.0 * p.eps0_prime * B.radius * B.radius; };
  const GoodBallReport sur = good_ball(y.K, injected, Ball(y.spec.apex, 0.2), p);
  CHECK_FALSE(sur.good);
  CHECK(sur.failed == BallClause::Surplus);
}

TEST_CASE("multiscale parameters are validated") {
  MultiscaleParams p;
  CHECK_NOTHROW(p.validate());
  p.eps0_prime = 0.06;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = MultiscaleParams{};
  p.eps0 = 0.2;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = MultiscaleParams{};
  p.A = 0.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = MultiscaleParams{};
  p.U = 20.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("stopping times") {
  const MultiscaleParams p;
  const Scene t = exact_scene(ConeKind::T, 64);
  const StoppingTime on = stopping_time(t.K, t.spec.apex, p, 0.3, no_surplus());
  CHECK(on.d == 0.0);
  CHECK(on.radii.front() == 0.3);
  CHECK(on.radii.back() >= 2.0 * t.K.spacing);
  for (std::size_t i = 1; i < on.radii.size(); ++i) CHECK(on.radii[i] == doctest::Approx(on.radii[i - 1] / 2));

  const double b = 0.08;
  const Vec3 y(0.55, 0.5, 0.5);
  const Scene bump = bump_scene({{y, b}});
  const Vec3 top = bump.K.points[PointIndex(bump.K.points, 0.02).nearest(y + Vec3(0, 0, 0.1 * b))];
  const StoppingTime st = stopping_time(bump.K, top, p, 0.3, no_surplus());
  CHECK(st.d >= b / 4);
  CHECK(st.d <= 4 * b);

  CHECK_THROWS_AS(stopping_time(bump.K, Vec3(0.5, 0.5, 0.95), p, 0.1, no_surplus()), std::invalid_argument);
}

TEST_CASE("bad balls") {
  const MultiscaleParams p;
  const Ball region(Vec3::Constant(0.5), 0.3);
  for (ConeKind kind : kAll) {
    const Scene sc = exact_scene(kind, 64);
    const StoppingDecomposition S = bad_balls(sc.K, region, p, 0.3, no_surplus());
    CHECK(S.candidates > 100);
    CHECK(S.balls.empty());
    CHECK(bad_mass(S, Ball(region.center, 10 * sc.K.spacing)) == 0.0);
  }

  const double b = 0.08;
  const Vec3 y(0.55, 0.5, 0.5);
  const StoppingDecomposition one = bad_balls(bump_scene({{y, b}}).K, region, p, 0.3, no_surplus());
  REQUIRE(one.balls.size() == 1);
  CHECK((one.balls[0].center - y).norm() <= 2.0 * p.A * one.balls[0].stopping);
  CHECK(one.balls[0].radius == doctest::Approx(p.A * one.balls[0].stopping));
  CHECK(one.disjoint);
  CHECK(one.covered);

  const StoppingDecomposition two =
      bad_balls(bump_scene({{Vec3(0.25, 0.5, 0.5), 0.05}, {Vec3(0.75, 0.5, 0.5), 0.05}}).K, Ball(Vec3::Constant(0.5), 0.4),
                p, 0.2, no_surplus());
  REQUIRE(two.balls.size() == 2);
  CHECK(two.disjoint);
  CHECK(two.covered);
  CHECK((two.balls[0].center - two.balls[1].center).norm() >= two.balls[0].radius + two.balls[1].radius);
  const auto js = nlohmann::json(two);
  CHECK(js["balls"].size() == 2);
}

TEST_CASE("bad mass") {
  const Ball B(Vec3::Zero(), 1.0);
  CHECK(bad_mass(family({}), B) == 0.0);
  CHECK(bad_mass(family({{Vec3(1.1, 0, 0), 0.2, 0.1}}), B) == doctest::Approx(0.04));
  CHECK(bad_mass(family({{Vec3(1.1, 0, 0), 0.2, 0.1}, {Vec3(0, 0.5, 0), 0.3, 0.15}}), B) == doctest::Approx(0.13));
  CHECK(bad_mass(family({{Vec3(1.3, 0, 0), 0.2, 0.1}}), B) == 0.0);
  CHECK(bad_mass(family({{Vec3(1.1, 0, 0), 0.2, 0.1}}), Ball(Vec3::Zero(), 2.0)) == doctest::Approx(0.01));
}

TEST_CASE("geometric function") {
  CHECK(std::isinf(geometric_function(family({}), Vec3::Zero())));
  const StoppingDecomposition one = family({{Vec3(1, 0, 0), 0.25, 0.1}});
  CHECK(geometric_function(one, Vec3(3, 0, 0)) == doctest::Approx(2.0));
  CHECK(geometric_function(one, Vec3(1.1, 0, 0)) <= 0.25);

  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-1.0, 1.0), R(0.0, 0.3);
  std::vector<BadBall> balls;
  for (int i = 0; i < 12; ++i) balls.push_back({Vec3(U(rng), U(rng), U(rng)), R(rng), 0.0});
  const StoppingDecomposition S = family(balls);
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 a(2 * U(rng), 2 * U(rng), 2 * U(rng)), b(2 * U(rng), 2 * U(rng), 2 * U(rng));
    if (std::abs(geometric_function(S, a) - geometric_function(S, b)) > (a - b).norm() + 1e-12) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("radius selection") {
  const Vec3 c = Vec3::Zero();
  CHECK(choose_radius_rho(family({}), c, 1.0) == 0.5);

  const StoppingDecomposition one = family({{Vec3(0.6, 0, 0), 0.03, 0.0}});
  const double rho = choose_radius_rho(one, c, 1.0);
  CHECK(rho >= 0.5);
  CHECK(rho <= 0.75);
  CHECK(std::abs(rho - 0.6) >= 0.03);

  // Balls everywhere: the choice is no worse than the average over the scan.
  std::vector<BadBall> balls;
  for (int i = 0; i < 40; ++i) {
    const double t = 0.45 + 0.35 * i / 39.0;
    balls.push_back({Vec3(t * std::cos(i), t * std::sin(i), 0.0), 0.02 + 0.01 * (i % 3), 0.0});
  }
  const StoppingDecomposition S = family(balls);
  auto load = [&](double rho) {
    double s = 0.0;
    for (const BadBall& b : S.balls)
      if (std::abs(b.center.norm() - rho) < b.radius) s += b.radius * b.radius;
    return s;
  };
  double mean = 0.0;
  for (int j = 0; j < 64; ++j) mean += load(0.5 + 0.25 * j / 63.0) / 64.0;
  CHECK(load(choose_radius_rho(S, c, 1.0)) <= mean);
}

TEST_CASE("boundary walls") {
  const Ball B(Vec3(0.2, -0.1, 0.3), 1.0);
  const MinimalCone P(ConeKind::P, B.center, rotation_from_axis_angle(Vec3(0.4, 0.1, -0.2)));
  for (double beta : {0.01, 0.05, 0.09})
    CHECK(boundary_wall(B, P, beta) == doctest::Approx(4.0 * M_PI * beta).epsilon(0.01));
  double prev = boundary_wall(B, P, 0.05);
  for (double beta : {0.02, 0.005, 0.001}) {
    const double a = boundary_wall(B, P, beta);
    CHECK(a <= prev);
    prev = a;
  }
  CHECK(prev < 0.02);
  CHECK_THROWS_AS(boundary_wall(B, P, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(boundary_wall(B, P, 0.1), std::invalid_argument);

  // Monte Carlo oracle for the Y band.
  const MinimalCone Y(ConeKind::Y, B.center, rotation_from_axis_angle(Vec3(-0.3, 0.2, 0.5)));
  std::mt19937_64 rng(9);
  std::normal_distribution<double> N;
  int hits = 0;
  const int samples = 400000;
  for (int i = 0; i < samples; ++i) {
    const Vec3 d = Vec3(N(rng), N(rng), N(rng)).normalized();
    if (distance_to_cone(B.center + d, Y) <= 0.05) ++hits;
  }
  const double mc = 4.0 * M_PI * hits / samples;
  const double wall = boundary_wall(B, Y, 0.05);
  CHECK(wall == doctest::Approx(mc).epsilon(0.02));
  CHECK(wall == doctest::Approx(1.5 * 4.0 * M_PI * 0.05).epsilon(0.1));
}

TEST_CASE("competitor on sector-constant data adds nothing") {
  const Scene sc = exact_scene(ConeKind::P, 64);
  const Ball B(sc.spec.apex, 0.35);
  const ConeFit fit = fit_cone(sc.K, B, kAll, sc.spec.apex);
  const CompetitorSet C = build_competitor(sc.g, sc.K, B, fit);
  CHECK(C.added == 0);
  CHECK(C.area_surplus == 0.0);
  CHECK(C.F.size() == sc.K.indices_in(B).size());
  CHECK(C.separation.separating);
  CHECK(C.star.pass);
  CHECK(competitor_surplus(C)(B) == 0.0);
}

TEST_CASE("competitor fills a hole in the plane") {
  SceneSpec s;
  s.mode = SceneMode::Exact;
  s.kind = ConeKind::P;
  s.grid = 128;
  const double r = 0.4, hole = 0.05 * r;
  s.holes = {{s.apex, hole}};
  const Scene sc = make_scene(s);
  const Ball B(s.apex, r);
  REQUIRE_FALSE(separating_check(sc.K, B, sc.cone, 0.05).separating);
  const ConeFit fit = fit_cone(sc.K, B, kAll, s.apex);
  const CompetitorSet C = build_competitor(sc.g, sc.K, B, fit);
  CHECK(C.separation.separating);
  CHECK(C.added > 0);
  CHECK(C.area_surplus <= 1.5 * M_PI * hole * hole);
  CHECK(C.area_surplus >= 0.5 * M_PI * hole * hole);
  CHECK(C.tube_width < 0.01);
  CHECK(C.star.pass);
  CHECK(C.star.admissible > 0);
  CHECK(competitor_surplus(C)(B) == doctest::Approx(C.area_surplus));
  CHECK(competitor_surplus(C)(Ball(Vec3(0.2, 0.2, 0.5), 0.05)) == 0.0);
  const auto js = nlohmann::json(C);
  CHECK(js["separation"]["separating"] == true);
}

TEST_CASE("competitor preconditions") {
  const Scene flat = exact_scene(ConeKind::P, 32, {0.4, 0.4});
  const Ball B(flat.spec.apex, 0.35);
  const ConeFit fit = fit_cone(flat.K, B, kAll, flat.spec.apex);
  CHECK_THROWS_AS(build_competitor(flat.g, flat.K, B, fit), std::invalid_argument);
  ConeFit loose = fit;
  loose.beta = 0.05;
  const Scene step = exact_scene(ConeKind::P, 32);
  CHECK_THROWS_AS(build_competitor(step.g, step.K, B, loose), std::invalid_argument);
}
