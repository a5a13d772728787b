#include "mslab/set_metrics.hpp"

#include "mslab/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mslab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Vec3> points_in(const DiscreteSet& E, const Ball& B) {
  std::vector<Vec3> out;
  for (std::size_t i : E.indices_in(B)) out.push_back(E.points[i]);
  return out;
}

// Every k-th point so that at most `limit` remain.
std::vector<Vec3> strided(const std::vector<Vec3>& pts, std::size_t limit) {
  if (pts.size() <= limit) return pts;
  const std::size_t k = (pts.size() + limit - 1) / limit;
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < pts.size(); i += k) out.push_back(pts[i]);
  return out;
}

// max d(p, Z) over pts, stopping early once it exceeds `cutoff`.
double max_distance(const std::vector<Vec3>& pts, const MinimalCone& Z, double cutoff = kInf) {
  double m = 0.0;
  for (const Vec3& p : pts) {
    m = std::max(m, distance_to_cone(p, Z));
    if (m > cutoff) return m;
  }
  return m;
}

struct Placement {
  double s1, s2;
};

std::vector<Placement> placements(ConeKind kind, double r) {
  switch (kind) {
    case ConeKind::P: return {{0.0, 0.0}};
    case ConeKind::Y: return {{0.0, 0.0}, {0.2 * r, 0.0}, {0.45 * r, 0.0}, {0.75 * r, 0.0}};
    case ConeKind::T:
      return {{0.0, 0.0}, {0.3 * r, 0.0}, {0.7 * r, 0.0}, {0.3 * r, 0.3 * r}, {0.6 * r, 0.6 * r}, {0.7 * r, 0.2 * r}};
  }
  return {};
}

struct Candidate {
  double value;
  ConeKind kind;
  std::size_t rotation;
  Placement place;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.value != b.value) return a.value < b.value;
  if (a.rotation != b.rotation) return a.rotation < b.rotation;
  if (a.place.s1 != b.place.s1) return a.place.s1 < b.place.s1;
  return a.place.s2 < b.place.s2;
}

// Parameters of a refinement: rotation offset (axis-angle) and placement.
using Params = Eigen::Matrix<double, 5, 1>;

struct Refiner {
  ConeKind kind;
  Mat3 base;
  Vec3 constraint;
  double r;

  MinimalCone cone(const Params& x) const {
    const Mat3 R = rotation_from_axis_angle(x.head<3>()) * base;
    const double cap = 1.5 * r;
    const double s1 = std::min(std::abs(x[3]), cap);
    const double s2 = std::min(std::abs(x[4]), cap);
    return cone_through(kind, R, s1, s2, constraint);
  }
};

// Nelder-Mead on a max-type objective, with shrinking restarts.
Params nelder_mead(const std::function<double(const Params&)>& f, Params x0, const Params& step, int budget,
                   int& used) {
  constexpr int n = 5;
  std::array<Params, n + 1> s;
  std::array<double, n + 1> fv;
  auto init = [&](const Params& c, const Params& st) {
    s[0] = c;
    fv[0] = f(c);
    ++used;
    for (int i = 0; i < n; ++i) {
      s[i + 1] = c;
      s[i + 1][i] += st[i];
      fv[i + 1] = f(s[i + 1]);
      ++used;
    }
  };
  init(x0, step);
  int stall = 0;
  while (used < budget) {
    std::array<int, n + 1> idx;
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b] || (fv[a] == fv[b] && a < b); });
    const int best = idx[0], worst = idx[n], second = idx[n - 1];
    if (fv[worst] - fv[best] <= 1e-13 * std::max(1.0, std::abs(fv[best]))) {
      if (++stall > 2) break;
      Params st = step * std::pow(0.1, stall);
      init(s[best], st);
      continue;
    }
    Params centroid = Params::Zero();
    for (int i = 0; i <= n; ++i)
      if (i != worst) centroid += s[i];
    centroid /= n;
    const Params xr = centroid + (centroid - s[worst]);
    const double fr = f(xr);
    ++used;
    if (fr < fv[best]) {
      const Params xe = centroid + 2.0 * (centroid - s[worst]);
      const double fe = f(xe);
      ++used;
      if (fe < fr) {
        s[worst] = xe;
        fv[worst] = fe;
      } else {
        s[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      s[worst] = xr;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const Params xc = outside ? Params(centroid + 0.5 * (xr - centroid)) : Params(centroid + 0.5 * (s[worst] - centroid));
      const double fc = f(xc);
      ++used;
      if (fc < std::min(fr, fv[worst])) {
        s[worst] = xc;
        fv[worst] = fc;
      } else {
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          s[i] = s[best] + 0.5 * (s[i] - s[best]);
          fv[i] = f(s[i]);
          ++used;
        }
      }
    }
  }
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (fv[i] < fv[best]) best = i;
  return s[best];
}

struct Refined {
  MinimalCone cone;
  double beta;
};

Refined refine(const Refiner& rf, const Params& start, const std::vector<Vec3>& all, const FitOptions& opt) {
  // Work on a strided subset, then add the worst offenders of the full set
  // until the subset maximum is the full maximum.
  std::vector<Vec3> work = strided(all, opt.refine_points);
  Params x = start;
  const double rot_step = 0.15;
  const double pos_step = 0.1 * rf.r;
  Params step;
  step << rot_step, rot_step, rot_step, pos_step, pos_step;
  if (rf.kind == ConeKind::P) step.tail<2>().setZero();
  if (rf.kind == ConeKind::Y) step[4] = 0.0;
  for (int round = 0; round < 6; ++round) {
    int used = 0;
    auto f = [&](const Params& p) { return max_distance(work, rf.cone(p)); };
    x = nelder_mead(f, x, round == 0 ? step : Params(step * 0.1), opt.max_evaluations, used);
    const MinimalCone Z = rf.cone(x);
    const double sub = max_distance(work, Z);
    std::vector<std::pair<double, std::size_t>> d(all.size());
    for (std::size_t i = 0; i < all.size(); ++i) d[i] = {distance_to_cone(all[i], Z), i};
    const double full = std::max_element(d.begin(), d.end())->first;
    if (full <= sub * (1.0 + 1e-9) + 1e-15) break;
    const std::size_t add = std::min<std::size_t>(64, d.size());
    std::partial_sort(d.begin(), d.begin() + add, d.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    for (std::size_t i = 0; i < add; ++i) work.push_back(all[d[i].second]);
  }
  const MinimalCone Z = rf.cone(x);
  return {Z, max_distance(all, Z)};
}

}  // namespace

double unilateral_distance(const DiscreteSet& E, const MinimalCone& Z, const Ball& B) {
  double m = 0.0;
  const double r2 = B.radius * B.radius;
  for (const Vec3& p : E.points)
    if ((p - B.center).squaredNorm() <= r2) m = std::max(m, distance_to_cone(p, Z));
  return m / B.radius;
}

std::optional<double> hausdorff(const DiscreteSet& E, const DiscreteSet& F, const Ball& B) {
  const std::vector<Vec3> e = points_in(E, B);
  const std::vector<Vec3> f = points_in(F, B);
  if (e.empty() || f.empty()) return std::nullopt;
  auto directed = [&](const std::vector<Vec3>& from, const std::vector<Vec3>& to, double cell) {
    const PointIndex index(to, cell);
    double m = 0.0;
    for (const Vec3& p : from) m = std::max(m, index.nearest_distance(p));
    return m;
  };
  const double cell_e = std::max(E.spacing, 1e-6 * B.radius);
  const double cell_f = std::max(F.spacing, 1e-6 * B.radius);
  return std::max(directed(e, f, cell_f), directed(f, e, cell_e)) / B.radius;
}

MinimalCone cone_through(ConeKind kind, const Mat3& R, double s1, double s2, const Vec3& constraint) {
  switch (kind) {
    case ConeKind::P: return MinimalCone(kind, constraint, R);
    case ConeKind::Y:
      // constraint sits on the half-plane through d0 at distance s1 from the spine.
      return MinimalCone(kind, constraint - s1 * (R * y_directions()[0]), R);
    case ConeKind::T: {
      // constraint sits on the face spanned by A1, A2.
      const auto& A = tetra_vertices();
      return MinimalCone(kind, constraint - R * (s1 * A[0] + s2 * A[1]), R);
    }
  }
  throw std::invalid_argument("cone_through: bad kind");
}

namespace {

// Y cones with one half-plane in the least-squares plane through the
// constraint and the spine at several in-plane directions and distances.
// They catch a spine near the rim of the ball, which the coarse grid resolves
// too poorly. Returns the `keep` best on `pts`.
std::vector<std::pair<Mat3, Placement>> plane_aligned_seeds(const std::vector<Vec3>& pts, const Vec3& constraint,
                                                            double r, std::size_t keep) {
  if (pts.size() < 3) return {};
  Mat3 M = Mat3::Zero();
  for (const Vec3& p : pts) M += (p - constraint) * (p - constraint).transpose();
  const Eigen::SelfAdjointEigenSolver<Mat3> es(M);
  const Vec3 n = es.eigenvectors().col(0);
  const Vec3 a = es.eigenvectors().col(2), b = n.cross(a);
  std::vector<std::pair<double, std::pair<Mat3, Placement>>> scored;
  for (int k = 0; k < 12; ++k) {
    const double th = 2.0 * M_PI * k / 12.0;
    const Vec3 d0 = std::cos(th) * a + std::sin(th) * b;  // from the spine towards the constraint
    Mat3 R;
    R.col(0) = d0;
    R.col(1) = n;
    R.col(2) = d0.cross(n);
    for (double s1 : {0.5, 0.75, 0.95}) {
      const Placement pl{s1 * r, 0.0};
      const double v = max_distance(pts, cone_through(ConeKind::Y, R, pl.s1, 0.0, constraint));
      scored.push_back({v, {R, pl}});
    }
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  std::vector<std::pair<Mat3, Placement>> out;
  for (std::size_t i = 0; i < std::min(keep, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace

ConeFit fit_cone(const DiscreteSet& E, const Ball& B, const std::vector<ConeKind>& kinds, const Vec3& constraint,
                 const FitOptions& opt) {
  const std::vector<Vec3> all = points_in(E, B);
  if (all.empty()) throw std::invalid_argument("fit_cone: no sample points in the ball");
  if (kinds.empty()) throw std::invalid_argument("fit_cone: no cone kinds requested");
  const double r = B.radius;
  const std::vector<Vec3> coarse = strided(all, opt.coarse_points);
  const std::vector<Mat3> grid = rotation_grid(opt.orientations);
  const std::size_t keep = static_cast<std::size_t>(std::max(1, opt.refine_candidates));

  ConeFit result;
  result.kind_searched = kinds;
  std::vector<std::pair<ConeKind, Refined>> per_kind;
  std::vector<double> coarse_best;

  for (ConeKind kind : kinds) {
    const std::vector<Placement> pl = placements(kind, r);
    // Each chunk keeps its own top list; a candidate pruned inside a chunk is
    // worse than that chunk's k-th best and hence than the global k-th best.
    const std::size_t chunks = 32;
    std::vector<std::vector<Candidate>> tops(chunks);
    parallel_chunks(grid.size(), chunks, [&](std::size_t c, std::size_t b, std::size_t e) {
      std::vector<Candidate>& top = tops[c];
      for (std::size_t g = b; g < e; ++g) {
        for (const Placement& p : pl) {
          const double cutoff = top.size() < keep ? kInf : top.back().value;
          const MinimalCone Z = cone_through(kind, grid[g], p.s1, p.s2, constraint);
          const double v = max_distance(coarse, Z, cutoff);
          if (v > cutoff) continue;
          Candidate cand{v, kind, g, p};
          top.insert(std::upper_bound(top.begin(), top.end(), cand, better), cand);
          if (top.size() > keep) top.pop_back();
        }
      }
    });
    std::vector<Candidate> merged;
    for (const auto& t : tops) merged.insert(merged.end(), t.begin(), t.end());
    std::sort(merged.begin(), merged.end(), better);
    if (merged.size() > keep) merged.resize(keep);
    coarse_best.push_back(merged.front().value / r);

    std::vector<std::pair<Mat3, Placement>> seeds;
    for (const Candidate& cand : merged) seeds.emplace_back(grid[cand.rotation], cand.place);
    if (kind == ConeKind::Y) {
      const auto extra = plane_aligned_seeds(coarse, constraint, r, 2);
      seeds.insert(seeds.end(), extra.begin(), extra.end());
    }

    std::vector<Refined> refined(seeds.size(), Refined{MinimalCone::canonical(kind), kInf});
    parallel_chunks(seeds.size(), seeds.size(), [&](std::size_t c, std::size_t, std::size_t) {
      const Refiner rf{kind, seeds[c].first, constraint, r};
      Params x0;
      x0 << 0.0, 0.0, 0.0, seeds[c].second.s1, seeds[c].second.s2;
      refined[c] = refine(rf, x0, all, opt);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < refined.size(); ++i)
      if (refined[i].beta < refined[best].beta) best = i;
    per_kind.emplace_back(kind, refined[best]);
  }

  // Lowest kind whose fit is as good as the best one up to sampling noise.
  double beta_min = kInf;
  for (const auto& [k, f] : per_kind) beta_min = std::min(beta_min, f.beta);
  const double slack = 0.25 * E.spacing;
  std::size_t chosen = 0;
  bool found = false;
  for (std::size_t i = 0; i < per_kind.size(); ++i) {
    if (per_kind[i].second.beta > beta_min + slack) continue;
    if (!found || type_index(per_kind[i].first) < type_index(per_kind[chosen].first)) {
      chosen = i;
      found = true;
    }
  }
  result.cone = per_kind[chosen].second.cone;
  result.beta = per_kind[chosen].second.beta / r;
  result.coarse_beta = coarse_best[chosen];
  return result;
}

// ---------------------------------------------------------------------------

namespace {

// 6-connected component labels of cells where mask is true; 0 for others.
// Returns the number of components.
int label_components(const std::array<int, 3>& n, const std::vector<char>& mask, std::vector<int>& label) {
  const std::size_t total = static_cast<std::size_t>(n[0]) * n[1] * n[2];
  label.assign(total, 0);
  int count = 0;
  std::vector<std::size_t> stack;
  const long sx = 1, sy = n[0], sz = static_cast<long>(n[0]) * n[1];
  for (std::size_t start = 0; start < total; ++start) {
    if (!mask[start] || label[start]) continue;
    label[start] = ++count;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t c = stack.back();
      stack.pop_back();
      const long i = static_cast<long>(c % n[0]);
      const long j = static_cast<long>((c / n[0]) % n[1]);
      const long k = static_cast<long>(c / (static_cast<std::size_t>(n[0]) * n[1]));
      const long idx = static_cast<long>(c);
      auto push = [&](bool ok, long nb) {
        if (!ok) return;
        const auto u = static_cast<std::size_t>(nb);
        if (mask[u] && !label[u]) {
          label[u] = count;
          stack.push_back(u);
        }
      };
      push(i > 0, idx - sx);
      push(i + 1 < n[0], idx + sx);
      push(j > 0, idx - sy);
      push(j + 1 < n[1], idx + sy);
      push(k > 0, idx - sz);
      push(k + 1 < n[2], idx + sz);
    }
  }
  return count;
}

}  // namespace

SeparationReport separating_check(const DiscreteSet& E, const Ball& B, const MinimalCone& Z, double eps0) {
  SeparationReport rep;
  rep.unilateral = unilateral_distance(E, Z, B);
  if (rep.unilateral > eps0) {
    rep.status = SeparationStatus::PreconditionViolated;
    return rep;
  }
  const double s = E.spacing;
  const double r = B.radius;
  const int half = static_cast<int>(std::ceil(r / s));
  const int n1 = 2 * half + 1;
  const std::array<int, 3> n{n1, n1, n1};
  const Vec3 origin = B.center - Vec3::Constant(half * s);
  const std::size_t total = static_cast<std::size_t>(n1) * n1 * n1;

  const PointIndex index(E.points, s);
  std::vector<char> free(total, 0), region(total, 0);
  const double tube = r * eps0 + s;
  parallel_chunks(total, 64, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      const long i = static_cast<long>(c % n1), j = static_cast<long>((c / n1) % n1),
                 k = static_cast<long>(c / (static_cast<std::size_t>(n1) * n1));
      const Vec3 p = origin + s * Vec3(i, j, k);
      if (!B.contains(p)) continue;
      free[c] = !index.any_within(p, s);
      region[c] = distance_to_cone(p, Z) > tube;
    }
  });

  std::vector<int> free_label, region_label;
  const int free_count = label_components(n, free, free_label);
  const int region_count = label_components(n, region, region_label);

  // Discard raster crumbs along the sphere.
  std::vector<std::size_t> size(region_count + 1, 0);
  std::size_t inside = 0;
  for (std::size_t c = 0; c < total; ++c) {
    ++size[region_label[c]];
    if (B.contains(origin + s * Vec3(c % n1, (c / n1) % n1, c / (static_cast<std::size_t>(n1) * n1)))) ++inside;
  }
  const std::size_t min_size = std::max<std::size_t>(8, inside / 1000);
  std::vector<int> reps;  // one free label per significant region
  std::vector<int> region_free(region_count + 1, -1);
  bool consistent = true;
  for (std::size_t c = 0; c < total; ++c) {
    const int rl = region_label[c];
    if (rl == 0 || size[rl] < min_size) continue;
    const int fl = free_label[c];
    if (region_free[rl] == -1) region_free[rl] = fl;
    else if (region_free[rl] != fl) consistent = false;  // cannot happen when the precondition holds
  }
  for (int rl = 1; rl <= region_count; ++rl)
    if (region_free[rl] != -1) reps.push_back(region_free[rl]);

  rep.component_count = static_cast<int>(reps.size());
  rep.free_component_count = free_count;
  std::vector<int> sorted = reps;
  std::sort(sorted.begin(), sorted.end());
  const bool distinct = std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end() &&
                        std::find(sorted.begin(), sorted.end(), 0) == sorted.end();
  rep.separating = consistent && distinct;
  rep.status = rep.separating ? SeparationStatus::Separating : SeparationStatus::NotSeparating;

  rep.labels.dims = n;
  rep.labels.spacing = s;
  rep.labels.origin = origin;
  rep.labels.labels.resize(total);
  for (std::size_t c = 0; c < total; ++c) rep.labels.labels[c] = static_cast<std::uint8_t>(std::min(free_label[c], 255));
  return rep;
}

double discrete_area(const DiscreteSet& E, const Ball& B) {
  const double h = 0.5 * E.spacing;
  double total = 0.0;
  for (std::size_t i = 0; i < E.size(); ++i) {
    const double d = (E.points[i] - B.center).norm();
    if (d <= B.radius - h) total += E.weights[i];
    else if (d <= B.radius + h) total += 0.5 * E.weights[i];
  }
  return total;
}

double excess_density(const DiscreteSet& E, const Vec3& x, double r, ConeKind kind) {
  return discrete_area(E, Ball(x, r)) / (r * r) - density(kind);
}

std::string_view to_string(SeparationStatus s) {
  switch (s) {
    case SeparationStatus::Separating: return "separating";
    case SeparationStatus::NotSeparating: return "not_separating";
    case SeparationStatus::PreconditionViolated: return "precondition_violated";
  }
  return "?";
}

void to_json(nlohmann::json& j, const ConeFit& fit) {
  nlohmann::json kinds = nlohmann::json::array();
  for (ConeKind k : fit.kind_searched) kinds.push_back(std::string(to_string(k)));
  j = nlohmann::json{{"cone", fit.cone}, {"beta", fit.beta}, {"coarse_beta", fit.coarse_beta}, {"kind_searched", kinds}};
}

void to_json(nlohmann::json& j, const SeparationReport& rep) {
  j = nlohmann::json{{"status", std::string(to_string(rep.status))},
                     {"separating", rep.separating},
                     {"component_count", rep.component_count},
                     {"free_component_count", rep.free_component_count},
                     {"unilateral", rep.unilateral},
                     {"label_dims", rep.labels.dims},
                     {"label_spacing", rep.labels.spacing},
                     {"label_origin", {rep.labels.origin.x(), rep.labels.origin.y(), rep.labels.origin.z()}}};
}

}  // namespace mslab
