// maxent-smc command line: simulate, maxent, mle, posterior, oracle.
//
// Exit codes: 0 success, 1 I/O failure, 2 usage or invalid config,
// 3 divergence (partial trace written), 4 capability (d over the cap).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "maxent_smc/harness/experiments.hpp"

namespace fs = std::filesystem;
using namespace maxent_smc;
using namespace maxent_smc::harness;

namespace {

constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitCapability = 4;
constexpr const char* kOutDirEnv = "MAXENT_SMC_OUT_DIR";

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> replicates;
  std::optional<std::size_t> d_cap;
  bool mcmc_sampling = false;
  std::size_t threads = 1;
};

// Relative paths inside a config resolve against the config file's directory.
std::string resolve_against(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

ExperimentConfig load_config(const Options& o, Mode mode) {
  json j;
  try {
    j = json::parse(read_file(o.config_path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + o.config_path + " is not valid JSON: " + e.what());
  }
  auto c = parse_config(j, mode);
  const fs::path base = fs::path(o.config_path).parent_path();
  if (c.observations_path && mode != Mode::simulate) c.observations_path = resolve_against(base, *c.observations_path);
  if (c.moments_path) c.moments_path = resolve_against(base, *c.moments_path);
  if (o.seed) c.seed = *o.seed;
  if (o.replicates) c.replicates = *o.replicates;
  if (o.d_cap) c.d_cap = *o.d_cap;
  if (o.mcmc_sampling) c.mcmc_sampling = true;
  if (o.out_dir) {
    c.out_dir = *o.out_dir;
  } else if (c.out_dir) {
    c.out_dir = resolve_against(base, *c.out_dir);
  } else if (const char* env = std::getenv(kOutDirEnv); env && *env) {
    c.out_dir = env;
  } else {
    c.out_dir = ".";
  }
  return c;
}

int run(const Options& o, Mode mode) {
  try {
    const auto c = load_config(o, mode);
    const auto summary = run_experiment(c, *c.out_dir, o.threads);
    if (mode == Mode::oracle && c.replicates == 1) {
      std::cout << summary.dump(2) << "\n";
    } else {
      std::cout << mode_name(mode) << ": wrote results to " << *c.out_dir << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << " (partial output written)\n";
    return kExitDivergence;
  } catch (const CapabilityError& e) {
    std::cerr << "capability: " << e.what() << "\n";
    return kExitCapability;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maximum-entropy reconstruction and posterior sampling over d-bit states"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Options o;
  struct Entry {
    const char* name;
    const char* help;
    Mode mode;
  };
  const Entry entries[] = {
      {"simulate", "Draw synthetic observations from a ground-truth model", Mode::simulate},
      {"maxent", "Reconstruct the MaxEnt model from exact moments", Mode::maxent_exact},
      {"mle", "Maximum-likelihood fit to an observation file", Mode::mle},
      {"posterior", "SGLD posterior sampling given an observation file", Mode::posterior},
      {"oracle", "Exact Z, moments and entropy by enumeration", Mode::oracle},
  };
  std::optional<Mode> chosen;
  for (const auto& e : entries) {
    auto* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", o.config_path, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Master seed (overrides the config)");
    sub->add_option("--out-dir", o.out_dir,
                    std::string("Output directory (default: config out_dir, then $") + kOutDirEnv + ", then .)");
    sub->add_option("--replicates", o.replicates, "Independent replicates with derived seeds")->check(CLI::PositiveNumber);
    sub->add_option("--d-cap", o.d_cap, "Largest d for exact enumeration")->check(CLI::Range(1, 40));
    sub->add_flag("--mcmc-sampling", o.mcmc_sampling, "simulate: approximate Gibbs draws (allows d over the cap)");
    sub->add_option("--threads", o.threads, "Threads for replicate sweeps")->check(CLI::PositiveNumber);
    sub->callback([&chosen, mode = e.mode] { chosen = mode; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  return run(o, *chosen);
}
