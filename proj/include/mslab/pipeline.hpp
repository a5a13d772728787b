#pragma once

#include "mslab/decay_lab.hpp"
#include "mslab/multiscale.hpp"
#include "mslab/phase_field.hpp"
#include "mslab/scene.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mslab {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitCheckFailure = 2, kExitMissingInput = 3, kExitInvalidConfig = 4 };

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverConfig {
  double epsilon = 0.0;  ///< 0 -> two grid spacings
  double fidelity = 100.0;
  int iters = 200;
  double threshold = 0.5;  ///< extraction level of v
  SolverOptions options;
};

/// Gauge used by the sweeps of one scene: "zero", "scene" (the solver's
/// fidelity-weighted C_N |g|^2) or a number (linear constant).
struct GaugeChoice {
  enum class Form { Zero, Scene, Linear };
  Form form = Form::Zero;
  double constant = 0.0;
};

struct CheckConfig {
  CheckOptions options;
  std::array<double, 4> tau{1e-1, 5e-2, 1e-2, 1e-3};  ///< tau1 > tau2 > tau3 > tau4
  double b = 0.5;       ///< exponent of the tilde gauge
  double eps3 = 0.1;
  double a0 = 0.25;
  double eta2 = 0.1;
  double alpha_min = 0.0;     ///< beta exponent must exceed this
  double residual_max = 0.5;  ///< and fit with at most this RMS log residual
  bool jump_lower_bound = true;
};

inline const std::vector<std::string>& lemma_check_names() {
  static const std::vector<std::string> names{"jump_stability", "jump_growth", "energy_decay", "bad_mass_bound",
                                              "bad_mass_bound_wall"};
  return names;
}
/// Lemma checks plus beta_exponent, self_improvement, energy_smallness.
const std::vector<std::string>& check_names();

struct SceneEntry {
  SceneSpec spec;
  std::vector<Vec3> centers;  ///< empty -> the apex
  double r0 = 0.4;
  GaugeChoice gauge;
  SweepOptions sweep;  ///< global sweep and multiscale options with the entry's patches applied
  std::vector<std::string> checks{"jump_stability", "jump_growth", "energy_decay", "bad_mass_bound"};
};

struct RunConfig {
  std::uint64_t seed = 1;
  SolverConfig solver;
  CheckConfig checks;
  std::vector<SceneEntry> scenes;
  /// Throws ConfigError on any parameter outside its documented range.
  void validate() const;
};

/// Scene seeds not given explicitly are derived from the run seed and the
/// scene name. Unknown keys are rejected. Throws ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
/// Throws MissingInput when the file is absent, ConfigError when it does not parse.
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical form (every field explicit); feeding it back gives the same config.
nlohmann::json to_json(const RunConfig& c);

/// Command-line overrides, applied after the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> grid;
  std::optional<double> epsilon;
  std::optional<double> fidelity;
  std::optional<int> iters;
  std::optional<std::string> scene;  ///< a scene name, or a kind selecting every scene of that kind
};

/// With no config, `scene` must be a kind and yields a one-scene phase-field
/// run. Throws ConfigError when nothing matches.
RunConfig apply_overrides(std::optional<RunConfig> base, const Overrides& o);

/// Per-command outcome: files written (relative to the output directory) and exit code.
struct StepResult {
  std::vector<std::string> files;
  int exit_code = kExitOk;
  std::vector<std::string> messages;
};

/// out/scenes/<name>/: g grid, scene.json (spec, cone, gauge constant) and K.csv in exact mode.
StepResult cmd_generate(const RunConfig& c, const std::filesystem::path& out);
/// out/states/<name>/: u and v grids, K.csv, state.json with the energy trace.
StepResult cmd_solve(const RunConfig& c, const std::filesystem::path& out);
/// out/sweeps/<name>_c<i>.{json,csv} and _beta.csv per centre, plus
/// _smallness.json when energy_smallness is requested.
StepResult cmd_analyze(const RunConfig& c, const std::filesystem::path& out);

struct VerifyOptions {
  std::filesystem::path baseline;  ///< empty -> out/baseline.json
  bool init_baseline = false;      ///< write the baseline from this run instead of comparing
  std::optional<std::string> only_check;
};

/// Runs every configured check, writes out/checks/<name>_c<i>.json per job and
/// out/summary.json. Exit 2 when a check fails or a constant regresses, 3 when
/// the baseline is missing and not being initialised.
StepResult cmd_verify(const RunConfig& c, const std::filesystem::path& out, const VerifyOptions& v = {});
/// Renders out/summary.json as a Markdown table at out/report.md.
StepResult cmd_report(const std::filesystem::path& out);

std::string sweep_stem(const std::string& scene, std::size_t center);

}  // namespace mslab
