// mslab: generate / solve / analyze / verify / report, plus `run` for all four
// checks-producing steps in order.

#include "mslab/parallel.hpp"
#include "mslab/pipeline.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <Eigen/Core>
#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mslab;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 failed");
  }
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Every file under out except the manifest, with its hash; timings carry over
// from earlier commands on the same directory.
void write_manifest(const fs::path& out, const std::string& command, const std::optional<RunConfig>& cfg,
                    double seconds) {
  const fs::path path = out / "manifest.json";
  json m = json::object();
  if (fs::exists(path)) {
    try {
      m = json::parse(slurp(path));
    } catch (const json::exception&) {
      m = json::object();
    }
  }
  if (cfg) m["config_sha256"] = sha256_hex(to_json(*cfg).dump());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (entry.is_regular_file() && entry.path() != path) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  json list = json::array();
  for (const fs::path& f : files) {
    const std::string bytes = slurp(f);
    list.push_back({{"path", fs::relative(f, out).generic_string()}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
  }
  m["files"] = list;
  m["versions"] = {{"mslab", kVersion},
                   {"compiler", __VERSION__},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"openssl", OPENSSL_VERSION_TEXT}};
  m["timings"][command] = seconds;
  std::ofstream os(path);
  os << m.dump(2) << '\n';
}

void print(const StepResult& r) {
  for (const std::string& msg : r.messages) std::cout << msg << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for 3D Mumford-Shah minimizers near minimal cones"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "mslab_out";
  std::string baseline;
  std::string check;
  bool init_baseline = false;
  unsigned threads = 0;
  Overrides ov;
  std::uint64_t seed = 0;
  int grid = 0, iters = 0;
  double epsilon = 0.0, fidelity = 0.0;
  std::string scene;

  app.add_option("--config", config_path, "Run configuration (JSON)");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  auto* o_seed = app.add_option("--seed", seed, "Run seed; scenes without an explicit seed derive theirs from it");
  auto* o_grid = app.add_option("--grid", grid, "Cells per axis for every scene")->check(CLI::Range(8, 1024));
  auto* o_scene = app.add_option("--scene", scene, "Scene name, or a kind (P, Y, T) selecting scenes");
  auto* o_eps = app.add_option("--epsilon", epsilon, "Phase-field width (0: two grid spacings)");
  auto* o_fid = app.add_option("--fidelity", fidelity, "Fidelity weight");
  auto* o_iters = app.add_option("--iters", iters, "Alternate-minimization iterations");
  app.add_option("--check", check, "Run only this check (verify)");
  app.add_option("--baseline", baseline, "Baseline constants (default OUT/baseline.json)");
  app.add_flag("--init-baseline", init_baseline, "Write the baseline from this run instead of comparing");
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"generate", "Write scene data g (and K for exact scenes)"},
      {"solve", "Run the phase-field solver and extract K"},
      {"analyze", "Scale sweeps at every configured centre"},
      {"verify", "Evaluate the decay checks against the baseline"},
      {"report", "Render the verification summary as Markdown"},
      {"run", "generate, solve, analyze and verify in order"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalidConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  if (threads > 0) set_worker_count(threads);
  if (*o_seed) ov.seed = seed;
  if (*o_grid) ov.grid = grid;
  if (*o_scene) ov.scene = scene;
  if (*o_eps) ov.epsilon = epsilon;
  if (*o_fid) ov.fidelity = fidelity;
  if (*o_iters) ov.iters = iters;

  const fs::path out(out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    std::optional<RunConfig> cfg;
    int code = kExitOk;
    if (command == "report") {
      print(cmd_report(out));
    } else {
      std::optional<RunConfig> base;
      if (!config_path.empty()) base = load_run_config(config_path);
      cfg = apply_overrides(std::move(base), ov);
      fs::create_directories(out);
      {
        std::ofstream os(out / "config.json");
        os << to_json(*cfg).dump(2) << '\n';
      }
      VerifyOptions vo;
      vo.baseline = baseline;
      vo.init_baseline = init_baseline;
      if (!check.empty()) vo.only_check = check;
      auto step = [&](const StepResult& r) {
        print(r);
        code = r.exit_code;
        return code == kExitOk;
      };
      if (command == "generate") step(cmd_generate(*cfg, out));
      else if (command == "solve") step(cmd_solve(*cfg, out));
      else if (command == "analyze") step(cmd_analyze(*cfg, out));
      else if (command == "verify") step(cmd_verify(*cfg, out, vo));
      else if (step(cmd_generate(*cfg, out)) && step(cmd_solve(*cfg, out)) && step(cmd_analyze(*cfg, out)))
        step(cmd_verify(*cfg, out, vo));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(out, command, cfg, seconds);
    return code;
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const MissingInput& e) {
    std::cerr << "missing input: " << e.what() << '\n';
    return kExitMissingInput;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << " (residual " << e.residual << ")\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
