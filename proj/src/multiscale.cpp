#include "mslab/multiscale.hpp"

#include "mslab/parallel.hpp"
#include "mslab/phase_field.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mslab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json ball_json(const Ball& B) {
  return nlohmann::json{{"center", {B.center.x(), B.center.y(), B.center.z()}}, {"radius", B.radius}};
}

// Index box of the cells of g whose centres may lie in B, clipped to the grid.
struct CellBox {
  std::array<int, 3> lo{0, 0, 0}, hi{-1, -1, -1};
  std::array<int, 3> dims() const { return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}; }
  std::size_t size() const {
    const auto d = dims();
    return d[0] <= 0 || d[1] <= 0 || d[2] <= 0 ? 0 : static_cast<std::size_t>(d[0]) * d[1] * d[2];
  }
  std::size_t local(int i, int j, int k) const {
    const auto d = dims();
    return static_cast<std::size_t>(i - lo[0]) + static_cast<std::size_t>(d[0]) * ((j - lo[1]) + static_cast<std::size_t>(d[1]) * (k - lo[2]));
  }
};

CellBox cell_box(const ScalarGrid& g, const Ball& B) {
  CellBox box;
  for (int a = 0; a < 3; ++a) {
    box.lo[a] = std::max(0, static_cast<int>(std::floor((B.center[a] - B.radius - g.origin[a]) / g.spacing)));
    box.hi[a] = std::min(g.dims[a] - 1, static_cast<int>(std::ceil((B.center[a] + B.radius - g.origin[a]) / g.spacing)));
  }
  return box;
}

template <typename Visit>
void for_cells_in(const ScalarGrid& g, const Ball& B, Visit&& visit) {
  const CellBox box = cell_box(g, B);
  for (int k = box.lo[2]; k <= box.hi[2]; ++k)
    for (int j = box.lo[1]; j <= box.hi[1]; ++j)
      for (int i = box.lo[0]; i <= box.hi[0]; ++i) {
        const Vec3 p = g.position(i, j, k);
        if ((p - B.center).norm() <= B.radius) visit(i, j, k, p);
      }
}

// D_k placement and means for one ball and cone.
void fill_domains(const ScalarGrid& u, const Ball& B, const MinimalCone& Z, double tube, JumpReport& rep) {
  const int n = sector_count(Z.kind());
  std::vector<double> best(n, -1.0);
  std::vector<Vec3> where(n, Vec3::Zero());
  const double inner = B.radius - B.radius / 10.0;
  for_cells_in(u, Ball(B.center, inner), [&](int, int, int, const Vec3& p) {
    const double d = distance_to_cone(p, Z);
    if (d <= tube * B.radius) return;
    const int s = Z.sector(p);
    if (d > best[s]) {
      best[s] = d;
      where[s] = p;
    }
  });
  rep.domains.clear();
  for (int s = 0; s < n; ++s) {
    if (best[s] < 0.0) continue;
    JumpDomain D;
    D.sector = s;
    D.ball = Ball(where[s], B.radius / 10.0);
    double sum = 0.0;
    for_cells_in(u, D.ball, [&](int i, int j, int k, const Vec3&) {
      sum += u.at(i, j, k);
      ++D.cells;
    });
    if (D.cells == 0) {
      // The domain is smaller than a cell: its centre cell stands in.
      const Vec3 q = (where[s] - u.origin) / u.spacing;
      sum = u.at(static_cast<int>(std::lround(q.x())), static_cast<int>(std::lround(q.y())), static_cast<int>(std::lround(q.z())));
      D.cells = 1;
    }
    D.mean = sum / static_cast<double>(D.cells);
    rep.domains.push_back(D);
  }
  rep.deltas.clear();
  rep.min_delta = kInf;
  for (std::size_t a = 0; a < rep.domains.size(); ++a)
    for (std::size_t b = a + 1; b < rep.domains.size(); ++b) {
      const double d = std::abs(rep.domains[a].mean - rep.domains[b].mean);
      rep.deltas.push_back(d);
      rep.min_delta = std::min(rep.min_delta, d);
    }
  if (rep.domains.size() < 2) {
    rep.status = JumpStatus::SingleComponent;
    rep.min_delta = 0.0;
    rep.J = 0.0;
    return;
  }
  rep.status = JumpStatus::Defined;
  rep.J = rep.min_delta / std::sqrt(B.radius);
}

// Squared 1D distance transform of f along a strided line (lower envelope of
// parabolas).
void edt_line(double* f, std::size_t n, std::size_t stride, std::vector<double>& d, std::vector<int>& v,
              std::vector<double>& z) {
  d.assign(n, 0.0);
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < static_cast<int>(n); ++q) {
    double s;
    for (;;) {
      const int p = v[k];
      s = ((f[q * stride] + q * q) - (f[p * stride] + p * p)) / (2.0 * (q - p));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < static_cast<int>(n); ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = (q - v[k]) * (q - v[k]) + f[v[k] * stride];
  }
  for (std::size_t q = 0; q < n; ++q) f[q * stride] = d[q];
}

// Distance (in cells) from every raster cell to the nearest seed cell.
std::vector<double> distance_field(const std::array<int, 3>& dims, const std::vector<char>& seed) {
  std::vector<double> f(seed.size());
  for (std::size_t i = 0; i < seed.size(); ++i) f[i] = seed[i] ? 0.0 : 1e30;
  std::vector<double> d, z;
  std::vector<int> v;
  const std::size_t nx = dims[0], ny = dims[1], nz = dims[2];
  for (std::size_t k = 0; k < nz; ++k)
    for (std::size_t j = 0; j < ny; ++j) edt_line(&f[nx * (j + ny * k)], nx, 1, d, v, z);
  for (std::size_t k = 0; k < nz; ++k)
    for (std::size_t i = 0; i < nx; ++i) edt_line(&f[i + nx * ny * k], ny, nx, d, v, z);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) edt_line(&f[i + nx * j], nz, nx * ny, d, v, z);
  for (double& x : f) x = std::sqrt(x);
  return f;
}

Mat3 frame_with_normal(const Vec3& n) {
  const Vec3 z = n.normalized();
  const Vec3 t = std::abs(z.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 x = (t - t.dot(z) * z).normalized();
  Mat3 R;
  R.col(0) = x;
  R.col(1) = z.cross(x);
  R.col(2) = z;
  return R;
}

}  // namespace

void MultiscaleParams::validate() const {
  if (!(eps0_prime > 0.0 && eps0_prime < eps0 && eps0 < 0.1))
    throw std::invalid_argument("multiscale: need 0 < eps0' < eps0 < 0.1");
  if (!(A >= 1.0)) throw std::invalid_argument("multiscale: A must be at least 1");
  if (!(U > 30.0)) throw std::invalid_argument("multiscale: U must exceed 30");
  if (!(floor_spacings >= 1.0)) throw std::invalid_argument("multiscale: floor_spacings must be at least 1");
}

bool almost_centered(const MinimalCone& Z, const Ball& B) {
  const double half = 0.5 * B.radius;
  switch (Z.kind()) {
    case ConeKind::P: return true;
    case ConeKind::Y: {
      const Vec3 d = Z.orientation().col(2);
      const Vec3 w = B.center - Z.apex();
      return (w - w.dot(d) * d).norm() <= half;
    }
    case ConeKind::T: return (B.center - Z.apex()).norm() <= half;
  }
  return false;
}

std::string_view to_string(JumpStatus s) {
  switch (s) {
    case JumpStatus::Defined: return "defined";
    case JumpStatus::SingleComponent: return "single_component";
    case JumpStatus::BetaTooLarge: return "beta_too_large";
    case JumpStatus::OffCenter: return "off_center";
    case JumpStatus::OutsideGrid: return "outside_grid";
  }
  return "?";
}

JumpReport jump(const ScalarGrid& u, const DiscreteSet& K, const Ball& B, const ConeFit& fit,
                const JumpOptions& options) {
  if (!u.contains_ball(B)) throw std::invalid_argument("jump: ball leaves the grid");
  JumpReport rep;
  rep.requested = B;
  rep.ball = B;
  rep.cone = fit.cone;
  rep.beta = fit.beta;
  if (fit.beta > options.max_beta) {
    rep.status = JumpStatus::BetaTooLarge;
    return rep;
  }
  if (almost_centered(fit.cone, B)) {
    fill_domains(u, B, fit.cone, options.tube, rep);
    return rep;
  }
  bool any_inside = false;
  for (int factor : {2, 4}) {
    const Ball Bf(B.center, factor * B.radius);
    if (!u.contains_ball(Bf)) continue;
    any_inside = true;
    const ConeFit f = fit_cone(K, Bf, {ConeKind::P, ConeKind::Y, ConeKind::T}, B.center, options.fit);
    if (f.beta > options.max_beta || !almost_centered(f.cone, Bf)) continue;
    rep.ball = Bf;
    rep.fallback = factor;
    rep.cone = f.cone;
    rep.beta = f.beta;
    fill_domains(u, Bf, f.cone, options.tube, rep);
    return rep;
  }
  rep.status = any_inside ? JumpStatus::OffCenter : JumpStatus::OutsideGrid;
  return rep;
}

SurplusFn no_surplus() {
  return [](const Ball&) { return 0.0; };
}

ConeCloseness cone_closeness(const DiscreteSet& E, const Ball& B, double eps, const std::vector<MinimalCone>& hints,
                             const FitOptions& fit) {
  const Vec3& x = B.center;
  const double r = B.radius;
  std::vector<Vec3> pts;
  for (std::size_t i : E.indices_in(B)) pts.push_back(E.points[i]);
  ConeCloseness out;
  out.cone = MinimalCone(ConeKind::P, x, Mat3::Identity());
  if (pts.empty()) return out;

  out.beta = kInf;
  auto consider = [&](const MinimalCone& Z) {
    double m = 0.0;
    for (const Vec3& p : pts) {
      m = std::max(m, distance_to_cone(p, Z));
      if (m >= out.beta * r) return;
    }
    out.beta = m / r;
    out.cone = Z;
  };
  for (const MinimalCone& Z : hints) {
    consider(Z.with_apex(Z.apex() + (x - nearest_point_on_cone(x, Z))));
    if (out.beta <= eps) return out;
  }
  if (pts.size() >= 3) {
    Mat3 M = Mat3::Zero();
    for (const Vec3& p : pts) M += (p - x) * (p - x).transpose();
    const Eigen::SelfAdjointEigenSolver<Mat3> es(M);
    consider(MinimalCone(ConeKind::P, x, frame_with_normal(es.eigenvectors().col(0))));
    if (out.beta <= eps) return out;
  }
  out.searched = true;
  for (const auto& kinds : {std::vector<ConeKind>{ConeKind::P}, std::vector<ConeKind>{ConeKind::Y, ConeKind::T}}) {
    const ConeFit f = fit_cone(E, B, kinds, x, fit);
    if (f.beta < out.beta) {
      out.beta = f.beta;
      out.cone = f.cone;
    }
    if (out.beta <= eps) break;
  }
  return out;
}

std::string_view to_string(BallClause c) {
  switch (c) {
    case BallClause::None: return "none";
    case BallClause::Surplus: return "surplus";
    case BallClause::Cone: return "cone";
  }
  return "?";
}

GoodBallReport good_ball(const DiscreteSet& K, const SurplusFn& surplus, const Ball& B, const MultiscaleParams& params,
                         const std::vector<MinimalCone>& hints) {
  GoodBallReport rep;
  rep.surplus = surplus ? surplus(B) : 0.0;
  if (rep.surplus > params.eps0_prime * B.radius * B.radius) {
    rep.failed = BallClause::Surplus;
    return rep;
  }
  const ConeCloseness c = cone_closeness(K, B, params.eps0, hints, params.fit);
  rep.beta = c.beta;
  rep.cone = c.cone;
  if (c.beta > params.eps0) {
    rep.failed = BallClause::Cone;
    return rep;
  }
  rep.good = true;
  return rep;
}

StoppingTime stopping_time(const DiscreteSet& K, const Vec3& x, const MultiscaleParams& params, double r_max,
                           const SurplusFn& surplus, const std::vector<MinimalCone>& hints) {
  if (!(r_max > 0.0)) throw std::invalid_argument("stopping_time: r_max must be positive");
  if (K.indices_in(Ball(x, r_max)).empty()) throw std::invalid_argument("stopping_time: no point of K within r_max");
  StoppingTime st;
  for (double r = r_max; r >= params.floor_spacings * K.spacing * (1.0 - 1e-12); r /= 2.0) st.radii.push_back(r);
  if (st.radii.empty()) st.radii.push_back(r_max);
  for (std::size_t i = 0; i < st.radii.size(); ++i) {
    const bool good = good_ball(K, surplus, Ball(x, st.radii[i]), params, hints).good;
    st.good.push_back(good);
    if (!good) {
      st.d = i == 0 ? 2.0 * r_max : st.radii[i - 1];
      return st;
    }
  }
  st.d = 0.0;
  return st;
}

double StoppingDecomposition::max_radius() const {
  double m = 0.0;
  for (const BadBall& b : balls) m = std::max(m, b.radius);
  return m;
}

StoppingDecomposition bad_balls(const DiscreteSet& K, const Ball& region, const MultiscaleParams& params, double r_max,
                                const SurplusFn& surplus, const std::vector<MinimalCone>& hints) {
  params.validate();
  StoppingDecomposition S;
  S.eps0 = params.eps0;
  S.eps0_prime = params.eps0_prime;
  S.A = params.A;
  S.region = region;
  S.r_max = r_max;
  const std::vector<std::size_t> idx = K.indices_in(region);
  S.candidates = idx.size();
  if (idx.empty()) return S;

  std::vector<MinimalCone> all_hints = hints;
  all_hints.push_back(fit_cone(K, region, {ConeKind::P, ConeKind::Y, ConeKind::T}, region.center, params.fit).cone);

  std::vector<double> d(idx.size(), 0.0);
  parallel_chunks(idx.size(), 64, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) d[i] = stopping_time(K, K.points[idx[i]], params, r_max, surplus, all_hints).d;
  });

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (d[i] > 0.0) order.push_back(i);
  S.stopped = order.size();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] > d[b]; });

  // The one serial stage: greedy selection depends on the order.
  for (std::size_t i : order) {
    const Vec3& c = K.points[idx[i]];
    const double rad = params.A * d[i];
    bool free = true;
    for (const BadBall& kept : S.balls)
      if ((c - kept.center).norm() < rad + kept.radius) {
        free = false;
        break;
      }
    if (free) S.balls.push_back({c, rad, d[i]});
  }
  for (std::size_t a = 0; a < S.balls.size(); ++a)
    for (std::size_t b = a + 1; b < S.balls.size(); ++b)
      if ((S.balls[a].center - S.balls[b].center).norm() < S.balls[a].radius + S.balls[b].radius) S.disjoint = false;
  for (std::size_t i : order) {
    const Vec3& c = K.points[idx[i]];
    const double rad = params.A * d[i];
    bool inside = false;
    for (const BadBall& kept : S.balls)
      if ((c - kept.center).norm() + rad <= 5.0 * kept.radius * (1.0 + 1e-12)) {
        inside = true;
        break;
      }
    if (!inside) S.covered = false;
  }
  return S;
}

double bad_mass(const StoppingDecomposition& S, const Ball& B) {
  double s = 0.0;
  for (const BadBall& b : S.balls)
    if ((b.center - B.center).norm() < b.radius + B.radius) s += b.radius * b.radius;
  return s / (B.radius * B.radius);
}

double geometric_function(const StoppingDecomposition& S, const Vec3& x) {
  double best = kInf;
  for (const BadBall& b : S.balls)
    best = std::min(best, std::max(0.0, (x - b.center).norm() - b.radius) + b.radius);
  return best;
}

double choose_radius_rho(const StoppingDecomposition& S, const Vec3& center, double r0) {
  constexpr int kScan = 64;
  double best_rho = 0.5 * r0, best_sum = kInf;
  for (int j = 0; j < kScan; ++j) {
    const double rho = 0.5 * r0 + 0.25 * r0 * j / (kScan - 1);
    double sum = 0.0;
    for (const BadBall& b : S.balls)
      if (std::abs((b.center - center).norm() - rho) < b.radius) sum += b.radius * b.radius;
    if (sum < best_sum) {
      best_sum = sum;
      best_rho = rho;
    }
  }
  return best_rho;
}

double boundary_wall(const Ball& B, const MinimalCone& Z, double beta, int samples) {
  if (!(beta > 0.0 && beta < 0.1)) throw std::invalid_argument("boundary_wall: need 0 < beta < 0.1");
  if (samples < 1) throw std::invalid_argument("boundary_wall: samples must be positive");
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  const double band = beta * B.radius;
  const double count = deterministic_sum(static_cast<std::size_t>(samples), [&](std::size_t i) {
    const double z = 1.0 - (2.0 * i + 1.0) / samples;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    const Vec3 p = B.center + B.radius * Vec3(rho * std::cos(phi), rho * std::sin(phi), z);
    return distance_to_cone(p, Z) <= band ? 1.0 : 0.0;
  });
  return 4.0 * M_PI * B.radius * B.radius * count / samples;
}

// ---------------------------------------------------------------------------
// Competitor

namespace {

struct Edge {
  double lo, hi;  // w values at the two ends
  double weight;  // h^2 |n_axis|
  Vec3 a, b;      // cell centres
  double wa, wb;
};

}  // namespace

CompetitorSet build_competitor(const ScalarGrid& u, const DiscreteSet& K, const Ball& B, const ConeFit& fit,
                               const CompetitorOptions& options) {
  options.params.validate();
  if (fit.beta > options.max_beta) throw std::invalid_argument("build_competitor: fit beta above the admissible bound");
  CompetitorSet C;
  C.jump = jump(u, K, B, fit, options.jump);
  if (!C.jump.defined()) throw std::invalid_argument("build_competitor: jump undefined (" + std::string(to_string(C.jump.status)) + ")");
  if (C.jump.fallback != 1) throw std::invalid_argument("build_competitor: cone not almost centred in the ball");
  if (!(C.jump.min_delta > 0.0)) throw std::invalid_argument("build_competitor: zero jump");
  const MinimalCone& Z = C.jump.cone;
  const double h = u.spacing, r = B.radius;
  const Vec3& x = B.center;
  C.J = C.jump.J;

  // Raster of the cells of u inside B.
  const CellBox box = cell_box(u, B);
  const std::size_t n = box.size();
  std::vector<char> inV(n, 0);
  std::vector<double> v(n, 0.0), w(n, 0.0), dV(n, 0.0);
  const double block = std::max(K.spacing, h);
  const PointIndex kidx(K.points, block);

  std::vector<double> mean(sector_count(Z.kind()), 0.0);
  std::vector<char> has(sector_count(Z.kind()), 0);
  for (const JumpDomain& D : C.jump.domains) {
    mean[D.sector] = D.mean;
    has[D.sector] = 1;
  }
  const double inner = r / 100.0, outer = r / 10.0;
  for (int k = box.lo[2]; k <= box.hi[2]; ++k)
    for (int j = box.lo[1]; j <= box.hi[1]; ++j)
      for (int i = box.lo[0]; i <= box.hi[0]; ++i) {
        const Vec3 p = u.position(i, j, k);
        const double rad = (p - x).norm();
        if (rad > r) continue;
        const std::size_t c = box.local(i, j, k);
        inV[c] = !kidx.any_within(p, block);
        dV[c] = r - rad;
        // Sector cutoff: v = m_k deep inside sector k, u near Z.
        const int s = Z.sector(p);
        const double phi = has[s] ? std::clamp((distance_to_cone(p, Z) - inner) / (outer - inner), 0.0, 1.0) : 0.0;
        v[c] = phi * mean[s] + (1.0 - phi) * u.at(i, j, k);
      }

  // Distance to K, to within a cell, from the cells holding K points.
  {
    std::vector<char> seed(n, 0);
    for (const Vec3& p : K.points) {
      const Vec3 q = (p - u.origin) / h;
      std::array<int, 3> c;
      bool inside = true;
      for (int a = 0; a < 3; ++a) {
        c[a] = static_cast<int>(std::lround(q[a]));
        inside = inside && c[a] >= box.lo[a] && c[a] <= box.hi[a];
      }
      if (inside) seed[box.local(c[0], c[1], c[2])] = 1;
    }
    if (std::find(seed.begin(), seed.end(), 1) != seed.end()) {
      const std::vector<double> dk = distance_field(box.dims(), seed);
      for (std::size_t c = 0; c < n; ++c) dV[c] = std::min(dV[c], h * dk[c]);
    }
  }

  // Local averaging with kernel radius 2 d(y, dV) / U.
  for (int k = box.lo[2]; k <= box.hi[2]; ++k)
    for (int j = box.lo[1]; j <= box.hi[1]; ++j)
      for (int i = box.lo[0]; i <= box.hi[0]; ++i) {
        const std::size_t c = box.local(i, j, k);
        if (!inV[c]) continue;
        const double rho = 2.0 * dV[c] / options.params.U;
        const int m = static_cast<int>(std::floor(rho / h));
        if (m < 1) {
          w[c] = v[c];
          continue;
        }
        double sw = 0.0, sv = 0.0;
        for (int dk = -m; dk <= m; ++dk)
          for (int dj = -m; dj <= m; ++dj)
            for (int di = -m; di <= m; ++di) {
              const int ii = i + di, jj = j + dj, kk = k + dk;
              if (ii < box.lo[0] || jj < box.lo[1] || kk < box.lo[2] || ii > box.hi[0] || jj > box.hi[1] || kk > box.hi[2]) continue;
              const std::size_t q = box.local(ii, jj, kk);
              if (!inV[q]) continue;
              const double dist = h * std::sqrt(static_cast<double>(di * di + dj * dj + dk * dk));
              if (dist > rho) continue;
              const double wt = 1.0 - dist / rho;
              sw += wt;
              sv += wt * v[q];
            }
        w[c] = sv / sw;
      }

  // Cell gradients of w for the level-surface normals.
  auto cell_grad = [&](int i, int j, int k) {
    Vec3 g = Vec3::Zero();
    const std::array<int, 3> c0{i, j, k};
    for (int a = 0; a < 3; ++a) {
      std::array<int, 3> lo = c0, hi = c0;
      lo[a]--;
      hi[a]++;
      auto ok = [&](const std::array<int, 3>& q) {
        for (int b = 0; b < 3; ++b)
          if (q[b] < box.lo[b] || q[b] > box.hi[b]) return false;
        return inV[box.local(q[0], q[1], q[2])] != 0;
      };
      const bool l = ok(lo), h2 = ok(hi);
      const double wc = w[box.local(i, j, k)];
      if (l && h2) g[a] = (w[box.local(hi[0], hi[1], hi[2])] - w[box.local(lo[0], lo[1], lo[2])]) / (2.0 * h);
      else if (h2) g[a] = (w[box.local(hi[0], hi[1], hi[2])] - wc) / h;
      else if (l) g[a] = (wc - w[box.local(lo[0], lo[1], lo[2])]) / h;
    }
    return g;
  };

  std::vector<Edge> edges;
  for (int k = box.lo[2]; k <= box.hi[2]; ++k)
    for (int j = box.lo[1]; j <= box.hi[1]; ++j)
      for (int i = box.lo[0]; i <= box.hi[0]; ++i) {
        const std::size_t c = box.local(i, j, k);
        if (!inV[c]) continue;
        for (int a = 0; a < 3; ++a) {
          std::array<int, 3> q{i, j, k};
          q[a]++;
          if (q[a] > box.hi[a]) continue;
          const std::size_t nb = box.local(q[0], q[1], q[2]);
          if (!inV[nb] || w[nb] == w[c]) continue;
          Vec3 g = 0.5 * (cell_grad(i, j, k) + cell_grad(q[0], q[1], q[2]));
          g[a] = (w[nb] - w[c]) / h;
          Edge e;
          e.lo = std::min(w[c], w[nb]);
          e.hi = std::max(w[c], w[nb]);
          e.weight = h * h * std::abs(g[a]) / g.norm();
          e.a = u.position(i, j, k);
          e.b = u.position(q[0], q[1], q[2]);
          e.wa = w[c];
          e.wb = w[nb];
          edges.push_back(e);
        }
      }

  // One level per pair of components, from the middle tenth of their means.
  C.F.spacing = block;
  for (std::size_t i : K.indices_in(B)) C.F.add(K.points[i], K.weights[i]);
  const std::size_t kept = C.F.size();
  const int nc = std::max(2, options.level_candidates);
  for (std::size_t a = 0; a < C.jump.domains.size(); ++a)
    for (std::size_t b = a + 1; b < C.jump.domains.size(); ++b) {
      const double m0 = C.jump.domains[a].mean, m1 = C.jump.domains[b].mean;
      const double lo = std::min(m0, m1), hi = std::max(m0, m1), mid = 0.5 * (lo + hi);
      double best_t = mid, best_area = kInf;
      for (int jdx = 0; jdx < nc; ++jdx) {
        const double t = mid + (hi - lo) * (static_cast<double>(jdx) / (nc - 1) - 0.5) / 10.0;
        double area = 0.0;
        for (const Edge& e : edges)
          if (e.lo < t && t <= e.hi) area += e.weight;
        if (area < best_area) {
          best_area = area;
          best_t = t;
        }
      }
      C.pairs.emplace_back(C.jump.domains[a].sector, C.jump.domains[b].sector);
      C.levels.push_back(best_t);
      for (const Edge& e : edges)
        if (e.lo < best_t && best_t <= e.hi) {
          const double f = (best_t - e.wa) / (e.wb - e.wa);
          C.F.add(e.a + f * (e.b - e.a), e.weight);
          C.area_surplus += e.weight;
        }
    }
  C.added = C.F.size() - kept;

  for (std::size_t i = kept; i < C.F.size(); ++i)
    C.tube_width = std::max(C.tube_width, distance_to_cone(C.F.points[i], Z) / r);
  C.omega2 = normalized_energy(u, K, B);
  if (C.area_surplus == 0.0) C.surplus_constant = 0.0;
  else if (C.omega2 > 0.0) C.surplus_constant = C.area_surplus * C.J / (r * r * std::sqrt(C.omega2));
  else C.surplus_constant = kInf;

  C.separation = separating_check(C.F, B, Z, options.params.eps0);

  // Property star on a dyadic ladder of sub-balls centred on K.
  const std::vector<std::size_t> kin = K.indices_in(B);
  std::vector<std::size_t> sites;
  {
    const std::size_t limit = std::max<std::size_t>(1, options.star_sites);
    const std::size_t stride = std::max<std::size_t>(1, (kin.size() + limit - 1) / limit);
    for (std::size_t i = 0; i < kin.size(); i += stride) sites.push_back(kin[i]);
    if (C.added > 0 && !K.empty()) {
      const PointIndex near(K.points, block);
      const std::size_t astride = std::max<std::size_t>(1, (C.added + limit - 1) / limit);
      for (std::size_t i = kept; i < C.F.size(); i += astride) {
        const std::size_t q = near.nearest(C.F.points[i]);
        if (B.contains(K.points[q])) sites.push_back(q);
      }
    }
    std::sort(sites.begin(), sites.end());
    sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
  }
  std::vector<double> ladder;
  for (double s = r / 2.0; s >= 2.0 * C.F.spacing * (1.0 - 1e-12); s /= 2.0) ladder.push_back(s);
  const std::vector<MinimalCone> hints{Z};
  const double eps0 = options.params.eps0;
  std::vector<std::size_t> adm(sites.size(), 0), bad(sites.size(), 0);
  std::vector<double> worst(sites.size(), 0.0);
  parallel_chunks(sites.size(), 32, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t si = b; si < e; ++si) {
      const Vec3& y = K.points[sites[si]];
      const double room = r - (y - x).norm();
      for (double s : ladder) {
        if (s > room) continue;
        if (cone_closeness(K, Ball(y, s), eps0, hints, options.params.fit).beta > eps0) break;
        ++adm[si];
        const double bf = cone_closeness(C.F, Ball(y, s), eps0, hints, options.params.fit).beta;
        worst[si] = std::max(worst[si], bf);
        if (bf > eps0) ++bad[si];
      }
    }
  });
  C.star.sites = sites.size();
  for (std::size_t si = 0; si < sites.size(); ++si) {
    C.star.admissible += adm[si];
    C.star.violations += bad[si];
    C.star.worst_beta = std::max(C.star.worst_beta, worst[si]);
  }
  C.star.pass = C.star.violations == 0;
  return C;
}

SurplusFn competitor_surplus(const CompetitorSet& C) {
  const std::size_t first = C.F.size() - C.added;
  std::vector<Vec3> pts(C.F.points.begin() + static_cast<std::ptrdiff_t>(first), C.F.points.end());
  std::vector<double> wts(C.F.weights.begin() + static_cast<std::ptrdiff_t>(first), C.F.weights.end());
  return [pts = std::move(pts), wts = std::move(wts)](const Ball& B) {
    double s = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (B.contains(pts[i])) s += wts[i];
    return s;
  };
}

void to_json(nlohmann::json& j, const JumpReport& r) {
  nlohmann::json domains = nlohmann::json::array();
  for (const JumpDomain& D : r.domains)
    domains.push_back({{"sector", D.sector}, {"ball", ball_json(D.ball)}, {"mean", D.mean}, {"cells", D.cells}});
  j = nlohmann::json{{"status", std::string(to_string(r.status))},
                     {"requested", ball_json(r.requested)},
                     {"ball", ball_json(r.ball)},
                     {"fallback", r.fallback},
                     {"cone", r.cone},
                     {"beta", r.beta},
                     {"domains", domains},
                     {"deltas", r.deltas},
                     {"min_delta", r.min_delta},
                     {"J", r.J}};
}

void to_json(nlohmann::json& j, const StoppingDecomposition& S) {
  nlohmann::json balls = nlohmann::json::array();
  for (const BadBall& b : S.balls)
    balls.push_back({{"center", {b.center.x(), b.center.y(), b.center.z()}}, {"radius", b.radius}, {"stopping", b.stopping}});
  j = nlohmann::json{{"eps0", S.eps0},           {"eps0_prime", S.eps0_prime}, {"A", S.A},
                     {"region", ball_json(S.region)}, {"r_max", S.r_max},   {"balls", balls},
                     {"candidates", S.candidates}, {"stopped", S.stopped},     {"disjoint", S.disjoint},
                     {"covered", S.covered}};
}

void to_json(nlohmann::json& j, const StarReport& r) {
  j = nlohmann::json{{"sites", r.sites},
                     {"admissible", r.admissible},
                     {"violations", r.violations},
                     {"worst_beta", r.worst_beta},
                     {"pass", r.pass}};
}

void to_json(nlohmann::json& j, const CompetitorSet& C) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : C.pairs) pairs.push_back({a, b});
  j = nlohmann::json{{"points", C.F.size()},
                     {"added", C.added},
                     {"pairs", pairs},
                     {"levels", C.levels},
                     {"area_surplus", C.area_surplus},
                     {"omega2", C.omega2},
                     {"J", C.J},
                     {"surplus_constant", std::isfinite(C.surplus_constant) ? nlohmann::json(C.surplus_constant) : nlohmann::json(nullptr)},
                     {"tube_width", C.tube_width},
                     {"separation", C.separation},
                     {"star", C.star},
                     {"jump", C.jump}};
}

}  // namespace mslab
