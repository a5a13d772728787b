#pragma once

#include "mslab/discrete_set.hpp"
#include "mslab/grid.hpp"
#include "mslab/scene.hpp"

#include "json.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace mslab {

struct SolverOptions {
  double eta = 1e-6;           ///< keeps the u-system definite where v = 0
  double cg_tolerance = 1e-8;  ///< relative residual of each linear solve
  int cg_max_iterations = 20000;
  double stop_relative = 1e-7;  ///< stop when the relative energy decrease is below this
  double v_init = 1.0;
};

/// Raised when a linear solve misses its tolerance.
struct SolverError : std::runtime_error {
  double residual;
  SolverError(const std::string& what, double res) : std::runtime_error(what), residual(res) {}
};

struct PhaseFieldState {
  ScalarGrid u;
  ScalarGrid v;
  double epsilon = 0.0;
  double fidelity = 0.0;
  double eta = 0.0;
  std::vector<double> energy_trace;  ///< total energy: initial, then after each iteration
  int iterations = 0;
  int cg_iterations = 0;
  double max_residual = 0.0;         ///< worst relative residual over all solves
  double gauge_constant = 0.0;       ///< fidelity * C_N |g|_inf^2
};

/// Discrete elliptic energy
///   sum h^3 [ (v_f^2 + eta) |grad u|^2 + fid (u - g)^2 + eps |grad v|^2 + (1 - v)^2 / (4 eps) ]
/// with face weights v_f^2 = (v_i^2 + v_j^2) / 2 and zero-flux boundaries.
double at_energy(const ScalarGrid& u, const ScalarGrid& v, const ScalarGrid& g, double epsilon, double fidelity,
                 double eta);

/// Alternate minimization: exact u-step then exact v-step (Jacobi-PCG, warm
/// started). Requires epsilon >= 2 spacing, iters >= 1, fidelity > 0.
PhaseFieldState at_minimize(const Scene& scene, double epsilon, double fidelity, int iters,
                            const SolverOptions& options = {});

/// One exact u-step (exposed for the optimality check).
void solve_u(ScalarGrid& u, const ScalarGrid& v, const ScalarGrid& g, double fidelity, double eta,
             const SolverOptions& options, int* cg_iterations = nullptr, double* residual = nullptr);
/// Gradient of the u-subproblem objective (per unit volume).
std::vector<double> u_objective_gradient(const ScalarGrid& u, const ScalarGrid& v, const ScalarGrid& g,
                                         double fidelity, double eta);

/// Ridge points of {v < threshold} (one per valley crossing, sub-cell
/// located), each carrying the phase-field surface density
/// eps |grad v|^2 + (1 - v)^2 / (4 eps) of the nearby cells. Empty when v
/// never drops below the threshold. Requires 0 < threshold < 1.
DiscreteSet extract_singular_set(const PhaseFieldState& state, double threshold = 0.5);

/// State for an exact scene: u = g and v = 1.
PhaseFieldState exact_state(const Scene& scene);

/// r^-2 of the Dirichlet energy of u over B minus the cells within
/// (grid spacing + K spacing) of K, using central differences.
/// Throws std::invalid_argument when B leaves the grid.
double normalized_energy(const ScalarGrid& u, const DiscreteSet& K, const Ball& B);
/// Same integral without the r^-2 normalization.
double dirichlet_energy(const ScalarGrid& u, const DiscreteSet& K, const Ball& B);

struct GradientBoundReport {
  double lhs = 0.0;  ///< integral of |grad u|^2 over B \ K
  double rhs = 0.0;  ///< C_N (1 + h(R)) R^2
  double ratio = 0.0;
  bool pass = false;
};

GradientBoundReport gradient_bound_check(const ScalarGrid& u, const DiscreteSet& K, const Ball& B, double gauge_value,
                                         double c_n = kDefaultGaugeConstant);

void to_json(nlohmann::json& j, const GradientBoundReport& r);

}  // namespace mslab
