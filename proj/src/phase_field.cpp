#include "mslab/phase_field.hpp"

#include "mslab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace mslab {

namespace {

constexpr std::size_t kChunks = 64;

struct Layout {
  int n0, n1, n2;
  std::size_t sy, sz, total;
  explicit Layout(const ScalarGrid& g)
      : n0(g.dims[0]), n1(g.dims[1]), n2(g.dims[2]),
        sy(static_cast<std::size_t>(n0)), sz(static_cast<std::size_t>(n0) * n1), total(g.size()) {}
};

// Runs body(k) for every z-slab, in parallel over fixed slab ranges.
void for_slabs(const Layout& L, const std::function<void(int)>& body) {
  parallel_chunks(static_cast<std::size_t>(L.n2), std::min<std::size_t>(kChunks, L.n2),
                  [&](std::size_t, std::size_t b, std::size_t e) {
                    for (std::size_t k = b; k < e; ++k) body(static_cast<int>(k));
                  });
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  const std::size_t chunks = std::min<std::size_t>(kChunks, n);
  std::vector<double> part(chunks, 0.0);
  parallel_chunks(n, chunks, [&](std::size_t c, std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    part[c] = s;
  });
  double s = 0.0;
  for (double p : part) s += p;
  return s;
}

// Face weights along each axis: w[a][c] couples c and c + e_a.
struct FaceWeights {
  std::array<std::vector<double>, 3> w;
};

// y = diag * x + sum over faces of weight * (x_c - x_nb), zero-flux boundary.
void apply(const Layout& L, const std::vector<double>& diag, const FaceWeights& fw, double face_scale,
           const std::vector<double>& x, std::vector<double>& y) {
  for_slabs(L, [&](int k) {
    for (int j = 0; j < L.n1; ++j) {
      const std::size_t row = L.sy * j + L.sz * k;
      for (int i = 0; i < L.n0; ++i) {
        const std::size_t c = row + i;
        const double xc = x[c];
        double acc = 0.0;
        if (i > 0) acc += fw.w[0][c - 1] * (xc - x[c - 1]);
        if (i + 1 < L.n0) acc += fw.w[0][c] * (xc - x[c + 1]);
        if (j > 0) acc += fw.w[1][c - L.sy] * (xc - x[c - L.sy]);
        if (j + 1 < L.n1) acc += fw.w[1][c] * (xc - x[c + L.sy]);
        if (k > 0) acc += fw.w[2][c - L.sz] * (xc - x[c - L.sz]);
        if (k + 1 < L.n2) acc += fw.w[2][c] * (xc - x[c + L.sz]);
        y[c] = diag[c] * xc + face_scale * acc;
      }
    }
  });
}

// Diagonal of the operator above.
std::vector<double> full_diagonal(const Layout& L, const std::vector<double>& diag, const FaceWeights& fw,
                                  double face_scale) {
  std::vector<double> d(L.total);
  for_slabs(L, [&](int k) {
    for (int j = 0; j < L.n1; ++j)
      for (int i = 0; i < L.n0; ++i) {
        const std::size_t c = L.sy * j + L.sz * k + i;
        double s = 0.0;
        if (i > 0) s += fw.w[0][c - 1];
        if (i + 1 < L.n0) s += fw.w[0][c];
        if (j > 0) s += fw.w[1][c - L.sy];
        if (j + 1 < L.n1) s += fw.w[1][c];
        if (k > 0) s += fw.w[2][c - L.sz];
        if (k + 1 < L.n2) s += fw.w[2][c];
        d[c] = diag[c] + face_scale * s;
      }
  });
  return d;
}

struct CgResult {
  int iterations;
  double residual;
};

// Jacobi-preconditioned CG, warm started from x.
CgResult pcg(const Layout& L, const std::vector<double>& diag, const FaceWeights& fw, double face_scale,
             const std::vector<double>& b, std::vector<double>& x, double tol, int max_iter) {
  const std::size_t n = L.total;
  const std::vector<double> D = full_diagonal(L, diag, fw, face_scale);
  std::vector<double> r(n), z(n), p(n), Ap(n);
  apply(L, diag, fw, face_scale, x, Ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];
  const double bnorm = std::sqrt(dot(b, b));
  const double target = tol * (bnorm > 0.0 ? bnorm : 1.0);
  double rnorm = std::sqrt(dot(r, r));
  if (rnorm <= target) return {0, rnorm / (bnorm > 0.0 ? bnorm : 1.0)};
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / D[i];
  p = z;
  double rz = dot(r, z);
  int it = 0;
  while (it < max_iter) {
    ++it;
    apply(L, diag, fw, face_scale, p, Ap);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) break;
    const double alpha = rz / pAp;
    parallel_chunks(n, kChunks, [&](std::size_t, std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * Ap[i];
        z[i] = r[i] / D[i];
      }
    });
    rnorm = std::sqrt(dot(r, r));
    if (rnorm <= target) break;
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    parallel_chunks(n, kChunks, [&](std::size_t, std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) p[i] = z[i] + beta * p[i];
    });
  }
  // Report the true residual.
  apply(L, diag, fw, face_scale, x, Ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];
  return {it, std::sqrt(dot(r, r)) / (bnorm > 0.0 ? bnorm : 1.0)};
}

FaceWeights u_face_weights(const Layout& L, const std::vector<double>& v, double eta) {
  FaceWeights fw;
  for (auto& w : fw.w) w.assign(L.total, 0.0);
  for_slabs(L, [&](int k) {
    for (int j = 0; j < L.n1; ++j)
      for (int i = 0; i < L.n0; ++i) {
        const std::size_t c = L.sy * j + L.sz * k + i;
        const double vc = v[c] * v[c];
        if (i + 1 < L.n0) fw.w[0][c] = 0.5 * (vc + v[c + 1] * v[c + 1]) + eta;
        if (j + 1 < L.n1) fw.w[1][c] = 0.5 * (vc + v[c + L.sy] * v[c + L.sy]) + eta;
        if (k + 1 < L.n2) fw.w[2][c] = 0.5 * (vc + v[c + L.sz] * v[c + L.sz]) + eta;
      }
  });
  return fw;
}

FaceWeights unit_face_weights(const Layout& L) {
  FaceWeights fw;
  for (auto& w : fw.w) w.assign(L.total, 1.0);
  return fw;
}

// G_c = 1/2 sum over faces at c of (du / h)^2.
std::vector<double> face_gradient_energy(const Layout& L, const std::vector<double>& u, double h) {
  std::vector<double> G(L.total, 0.0);
  const double s = 0.5 / (h * h);
  for_slabs(L, [&](int k) {
    for (int j = 0; j < L.n1; ++j)
      for (int i = 0; i < L.n0; ++i) {
        const std::size_t c = L.sy * j + L.sz * k + i;
        const double uc = u[c];
        double acc = 0.0;
        auto add = [&](bool ok, std::size_t nb) {
          if (ok) acc += (u[nb] - uc) * (u[nb] - uc);
        };
        add(i > 0, c - 1);
        add(i + 1 < L.n0, c + 1);
        add(j > 0, c - L.sy);
        add(j + 1 < L.n1, c + L.sy);
        add(k > 0, c - L.sz);
        add(k + 1 < L.n2, c + L.sz);
        G[c] = s * acc;
      }
  });
  return G;
}

void check_same_layout(const ScalarGrid& a, const ScalarGrid& b) {
  if (a.dims != b.dims || a.spacing != b.spacing) throw std::invalid_argument("phase field: grids differ in layout");
}

void solve_v(ScalarGrid& v, const ScalarGrid& u, double epsilon, const SolverOptions& opt, int& cg_it, double& res) {
  const Layout L(v);
  const double h = v.spacing;
  std::vector<double> diag = face_gradient_energy(L, u.values, h);
  for (double& d : diag) d += 1.0 / (4.0 * epsilon);
  const std::vector<double> b(L.total, 1.0 / (4.0 * epsilon));
  const CgResult r = pcg(L, diag, unit_face_weights(L), epsilon / (h * h), b, v.values, opt.cg_tolerance,
                         opt.cg_max_iterations);
  cg_it += r.iterations;
  res = r.residual;
  if (r.residual > opt.cg_tolerance) throw SolverError("v-step did not converge", r.residual);
  for (double& x : v.values) x = std::clamp(x, 0.0, 1.0);
}

// Sub-cell crack offset along one axis, in cells. Off the crack 1 - v decays
// geometrically, so the far-side pair gives the decay rate and the near pair
// the offset; the parabola through the central three is the fallback.
double valley_offset(const ScalarGrid& v, std::size_t c, std::size_t stride, int i, int n, double lo, double hi,
                     double curv) {
  const double parabola = std::clamp(0.5 * (lo - hi) / curv, -0.5, 0.5);
  if (lo == hi) return 0.0;
  const bool right = hi < lo;
  const int far = right ? i - 2 : i + 2;
  if (far < 0 || far >= n) return parabola;
  const double w1 = 1.0 - (right ? lo : hi);
  const double w2 = 1.0 - v.values[right ? c - 2 * stride : c + 2 * stride];
  const double wn = 1.0 - (right ? hi : lo);
  if (!(w2 > 0.0 && w1 > w2 && wn > w1)) return parabola;
  const double off = 0.5 * std::log(wn / w1) / std::log(w1 / w2);
  return std::clamp(right ? off : -off, -0.5, 0.5);
}

}  // namespace

void solve_u(ScalarGrid& u, const ScalarGrid& v, const ScalarGrid& g, double fidelity, double eta,
             const SolverOptions& opt, int* cg_iterations, double* residual) {
  check_same_layout(u, v);
  check_same_layout(u, g);
  const Layout L(u);
  const double h = u.spacing;
  const std::vector<double> diag(L.total, fidelity);
  std::vector<double> b(L.total);
  for (std::size_t i = 0; i < L.total; ++i) b[i] = fidelity * g.values[i];
  const CgResult r = pcg(L, diag, u_face_weights(L, v.values, eta), 1.0 / (h * h), b, u.values, opt.cg_tolerance,
                         opt.cg_max_iterations);
  if (cg_iterations) *cg_iterations += r.iterations;
  if (residual) *residual = r.residual;
  if (r.residual > opt.cg_tolerance) throw SolverError("u-step did not converge", r.residual);
  const double lo = g.min(), hi = g.max();
  for (double& x : u.values) x = std::clamp(x, lo, hi);
}

std::vector<double> u_objective_gradient(const ScalarGrid& u, const ScalarGrid& v, const ScalarGrid& g,
                                         double fidelity, double eta) {
  const Layout L(u);
  const double h = u.spacing;
  const std::vector<double> diag(L.total, fidelity);
  std::vector<double> Au(L.total);
  apply(L, diag, u_face_weights(L, v.values, eta), 1.0 / (h * h), u.values, Au);
  // d/du of the per-volume objective is 2 (A u - fid g).
  for (std::size_t i = 0; i < L.total; ++i) Au[i] = 2.0 * (Au[i] - fidelity * g.values[i]);
  return Au;
}

double at_energy(const ScalarGrid& u, const ScalarGrid& v, const ScalarGrid& g, double epsilon, double fidelity,
                 double eta) {
  check_same_layout(u, v);
  check_same_layout(u, g);
  const Layout L(u);
  const double h = u.spacing;
  const double inv_h2 = 1.0 / (h * h);
  const std::size_t chunks = std::min<std::size_t>(kChunks, L.n2);
  std::vector<double> part(chunks, 0.0);
  parallel_chunks(static_cast<std::size_t>(L.n2), chunks, [&](std::size_t ch, std::size_t kb, std::size_t ke) {
    double s = 0.0;
    for (std::size_t kk = kb; kk < ke; ++kk) {
      const int k = static_cast<int>(kk);
      for (int j = 0; j < L.n1; ++j)
        for (int i = 0; i < L.n0; ++i) {
          const std::size_t c = L.sy * j + L.sz * k + i;
          const double vc2 = v.values[c] * v.values[c];
          auto face = [&](std::size_t nb) {
            const double du = u.values[nb] - u.values[c];
            const double dv = v.values[nb] - v.values[c];
            const double w = 0.5 * (vc2 + v.values[nb] * v.values[nb]) + eta;
            return (w * du * du + epsilon * dv * dv) * inv_h2;
          };
          if (i + 1 < L.n0) s += face(c + 1);
          if (j + 1 < L.n1) s += face(c + L.sy);
          if (k + 1 < L.n2) s += face(c + L.sz);
          const double r = u.values[c] - g.values[c];
          const double q = 1.0 - v.values[c];
          s += fidelity * r * r;
          if (epsilon > 0.0) s += q * q / (4.0 * epsilon);
        }
    }
    part[ch] = s;
  });
  double total = 0.0;
  for (double p : part) total += p;
  return total * h * h * h;
}

PhaseFieldState at_minimize(const Scene& scene, double epsilon, double fidelity, int iters, const SolverOptions& opt) {
  const ScalarGrid& g = scene.g;
  g.validate();
  if (iters < 1) throw std::invalid_argument("at_minimize: iters must be >= 1");
  if (!(epsilon >= 2.0 * g.spacing * (1.0 - 1e-12)))
    throw std::invalid_argument("at_minimize: epsilon must be >= 2 * grid spacing");
  if (!(fidelity > 0.0)) throw std::invalid_argument("at_minimize: fidelity must be positive");
  if (!(opt.eta >= 0.0)) throw std::invalid_argument("at_minimize: eta must be >= 0");
  if (!(opt.v_init >= 0.0 && opt.v_init <= 1.0)) throw std::invalid_argument("at_minimize: v_init must be in [0, 1]");

  PhaseFieldState st;
  st.u = g;
  st.v = ScalarGrid(g.dims, g.spacing, g.origin, opt.v_init);
  st.epsilon = epsilon;
  st.fidelity = fidelity;
  st.eta = opt.eta;
  st.gauge_constant = fidelity * scene.gauge_constant;
  st.energy_trace.push_back(at_energy(st.u, st.v, g, epsilon, fidelity, opt.eta));
  for (int it = 0; it < iters; ++it) {
    double res_u = 0.0, res_v = 0.0;
    solve_u(st.u, st.v, g, fidelity, opt.eta, opt, &st.cg_iterations, &res_u);
    solve_v(st.v, st.u, epsilon, opt, st.cg_iterations, res_v);
    st.max_residual = std::max({st.max_residual, res_u, res_v});
    ++st.iterations;
    const double prev = st.energy_trace.back();
    const double e = at_energy(st.u, st.v, g, epsilon, fidelity, opt.eta);
    st.energy_trace.push_back(e);
    if (prev - e < opt.stop_relative * std::abs(prev)) break;
  }
  return st;
}

PhaseFieldState exact_state(const Scene& scene) {
  PhaseFieldState st;
  st.u = scene.g;
  st.v = ScalarGrid(scene.g.dims, scene.g.spacing, scene.g.origin, 1.0);
  st.energy_trace.push_back(0.0);
  return st;
}

// ---------------------------------------------------------------------------

DiscreteSet extract_singular_set(const PhaseFieldState& st, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("extract: threshold must be in (0, 1)");
  const ScalarGrid& v = st.v;
  const Layout L(v);
  const double h = v.spacing;
  const std::array<std::size_t, 3> stride{1, L.sy, L.sz};
  const std::array<int, 3> n{L.n0, L.n1, L.n2};

  // Valley points: local minima of v along the axis (or axes, on ties) of
  // strongest curvature, away from the flanks of a crack (where v still
  // slopes along another axis more steeply than the valley curves).
  constexpr double tol = 1e-9;  // round-off in flat directions must not create valleys
  std::vector<Vec3> ridge;
  for (std::size_t c = 0; c < L.total; ++c) {
    const double vc = v.values[c];
    if (!(vc < threshold)) continue;
    const auto ijk = v.coords(c);
    std::array<double, 3> lo{}, hi{}, curv{};
    double best_curv = 0.0;
    for (int a = 0; a < 3; ++a) {
      lo[a] = ijk[a] > 0 ? v.values[c - stride[a]] : vc;
      hi[a] = ijk[a] + 1 < n[a] ? v.values[c + stride[a]] : vc;
      curv[a] = lo[a] - 2.0 * vc + hi[a];
      best_curv = std::max(best_curv, curv[a]);
    }
    for (int a = 0; a < 3; ++a) {
      if (!(curv[a] > tol && curv[a] >= best_curv)) continue;
      if (!(vc < lo[a] - tol && vc <= hi[a] + tol)) continue;
      bool flank = false;
      for (int b = 0; b < 3; ++b) flank = flank || (b != a && 0.5 * std::abs(hi[b] - lo[b]) > curv[a]);
      if (flank) continue;
      Vec3 p = v.position(c);
      p[a] += valley_offset(v, c, stride[a], ijk[a], n[a], lo[a], hi[a], curv[a]) * h;
      ridge.push_back(p);
    }
  }
  DiscreteSet K;
  K.spacing = h;
  if (ridge.empty()) return K;

  // Deposit the surface density of the band onto the nearest ridge point.
  const double eps = st.epsilon > 0.0 ? st.epsilon : h;
  const double reach = 6.0 * eps + h;
  const PointIndex index(ridge, h);
  std::vector<double> weight(ridge.size(), 0.0);
  const double vol = h * h * h;
  for (std::size_t c = 0; c < L.total; ++c) {
    const double vc = v.values[c];
    const auto ijk = v.coords(c);
    double grad2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      if (ijk[a] > 0) grad2 += 0.5 * std::pow((vc - v.values[c - stride[a]]) / h, 2);
      if (ijk[a] + 1 < n[a]) grad2 += 0.5 * std::pow((v.values[c + stride[a]] - vc) / h, 2);
    }
    const double dens = eps * grad2 + (1.0 - vc) * (1.0 - vc) / (4.0 * eps);
    if (dens <= 0.0) continue;
    const Vec3 p = v.position(c);
    const std::size_t nearest = index.nearest(p);
    if ((ridge[nearest] - p).norm() > reach) continue;
    weight[nearest] += dens * vol;
  }
  for (std::size_t i = 0; i < ridge.size(); ++i)
    if (weight[i] > 0.0) K.add(ridge[i], weight[i]);
  return K;
}

// ---------------------------------------------------------------------------

double dirichlet_energy(const ScalarGrid& u, const DiscreteSet& K, const Ball& B) {
  if (!u.contains_ball(B)) throw std::invalid_argument("normalized_energy: ball leaves the grid domain");
  const Layout L(u);
  const double h = u.spacing;
  const PointIndex index(K.points, std::max(h, K.spacing));
  const double excl = h + (K.empty() ? 0.0 : K.spacing);
  const std::array<std::size_t, 3> stride{1, L.sy, L.sz};
  const std::array<int, 3> n{L.n0, L.n1, L.n2};
  // Only the cells of the bounding box of B.
  std::array<int, 3> a{}, b{};
  for (int d = 0; d < 3; ++d) {
    a[d] = std::max(0, static_cast<int>(std::floor((B.center[d] - B.radius - u.origin[d]) / h)));
    b[d] = std::min(n[d] - 1, static_cast<int>(std::ceil((B.center[d] + B.radius - u.origin[d]) / h)));
  }
  const int slabs = b[2] - a[2] + 1;
  if (slabs <= 0) return 0.0;
  std::vector<double> part(static_cast<std::size_t>(slabs), 0.0);
  parallel_chunks(static_cast<std::size_t>(slabs), static_cast<std::size_t>(slabs),
                  [&](std::size_t s, std::size_t, std::size_t) {
                    const int k = a[2] + static_cast<int>(s);
                    double acc = 0.0;
                    for (int j = a[1]; j <= b[1]; ++j)
                      for (int i = a[0]; i <= b[0]; ++i) {
                        const Vec3 p = u.position(i, j, k);
                        if (!B.contains(p)) continue;
                        if (!K.empty() && index.any_within(p, excl)) continue;
                        const std::size_t c = u.index(i, j, k);
                        const std::array<int, 3> ijk{i, j, k};
                        double g2 = 0.0;
                        for (int d = 0; d < 3; ++d) {
                          const bool has_lo = ijk[d] > 0, has_hi = ijk[d] + 1 < n[d];
                          const double ulo = has_lo ? u.values[c - stride[d]] : u.values[c];
                          const double uhi = has_hi ? u.values[c + stride[d]] : u.values[c];
                          const double span = (has_lo && has_hi) ? 2.0 * h : h;
                          const double du = (uhi - ulo) / span;
                          g2 += du * du;
                        }
                        acc += g2;
                      }
                    part[s] = acc;
                  });
  double total = 0.0;
  for (double p : part) total += p;
  return total * h * h * h;
}

double normalized_energy(const ScalarGrid& u, const DiscreteSet& K, const Ball& B) {
  return dirichlet_energy(u, K, B) / (B.radius * B.radius);
}

GradientBoundReport gradient_bound_check(const ScalarGrid& u, const DiscreteSet& K, const Ball& B, double gauge_value,
                                         double c_n) {
  GradientBoundReport r;
  r.lhs = dirichlet_energy(u, K, B);
  r.rhs = c_n * (1.0 + gauge_value) * B.radius * B.radius;
  r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : (r.lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  r.pass = r.ratio <= 1.0;
  return r;
}

void to_json(nlohmann::json& j, const GradientBoundReport& r) {
  j = nlohmann::json{{"lhs", r.lhs}, {"rhs", r.rhs}, {"ratio", r.ratio}, {"pass", r.pass}};
}

}  // namespace mslab
