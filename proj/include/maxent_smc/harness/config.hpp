#pragma once

// Experiment configuration: JSON schema, defaults and validation.
//
//   {
//     "d": 4, "features": "pairwise", "seed": 1,
//     "truth": {"lambda": [...]} | {"random": {"low": -1, "high": 1}} | {"coupling_matrix": [[...]]},
//     "observations": {"path": "obs.txt", "count": 1000, "binary": false},
//     "moments": [...],  "moments_path": "m.json",
//     "smc": {"particles": 8, "beta": 0.6, "sweeps": 4, "kernel": "metropolis_bitflip",
//             "resampling": "multinomial", "threads": 1},
//     "solver": {"iterations": 10000, "schedule": "two_phase", "epsilon": 1, "n0": 20, "switch": 8,
//                "divergence_bound": 50, "state_count_scaling": false, "oracle_misfit_every": 1},
//     "posterior": {"steps": 10000, "delta0": 0.01, "exponent": 0.333, "prior": {"kind": "flat"},
//                   "base_particles": 16, "max_level": 6, "growth": 4, "burn_in": 0.5, "bins": 30,
//                   "gradient": "debiased"},
//     "mcmc": {"burn_in": 1000, "thin": 10},
//     "d_cap": 20, "mcmc_sampling": false, "out_dir": "out", "replicates": 1
//   }
//
// "coupling_matrix" A means pi(x) proportional to exp(-x^T A x).

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "maxent_smc/debias.hpp"
#include "maxent_smc/errors.hpp"
#include "maxent_smc/harness/io.hpp"
#include "maxent_smc/model.hpp"
#include "maxent_smc/sgld.hpp"
#include "maxent_smc/smc.hpp"
#include "maxent_smc/solver.hpp"

namespace maxent_smc::harness {

using json = nlohmann::json;

enum class Mode { simulate, maxent_exact, mle, posterior, oracle };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::simulate: return "simulate";
    case Mode::maxent_exact: return "maxent_exact";
    case Mode::mle: return "mle";
    case Mode::posterior: return "posterior";
    case Mode::oracle: return "oracle";
  }
  return "?";
}

struct TruthConfig {
  std::optional<std::vector<double>> lambda;
  std::optional<std::pair<double, double>> random_range;
  std::optional<std::vector<std::vector<double>>> coupling_matrix;

  bool present() const { return lambda || random_range || coupling_matrix; }
};

struct ExperimentConfig {
  Mode mode = Mode::oracle;
  std::size_t d = 0;
  std::string features = "pairwise";
  std::uint64_t seed = 1;
  TruthConfig truth;

  std::optional<std::string> observations_path;
  std::size_t observation_count = 0;
  bool binary_observations = false;
  std::optional<std::vector<double>> moments;
  std::optional<std::string> moments_path;

  std::size_t particles = 0;  // 0 selects 2d
  double beta = 0.6;
  std::size_t sweeps = 0;  // 0 selects d
  std::string kernel = "metropolis_bitflip";
  std::string resampling = "multinomial";
  std::size_t threads = 1;

  std::size_t iterations = 10000;
  std::string schedule = "two_phase";
  double epsilon = 1.0;
  double n0 = 0.0;          // 0 selects 5d
  std::size_t switch_n = 0;  // 0 selects 2d
  double divergence_bound = 50.0;
  bool state_count_scaling = false;
  std::size_t oracle_misfit_every = 1;

  std::size_t chain_steps = 10000;
  double delta0 = 0.01;
  double step_exponent = 1.0 / 3.0;
  std::string prior = "flat";
  double prior_mean = 0.0;
  double prior_variance = 1.0;
  std::size_t base_particles = 16;
  std::size_t max_level = 6;
  std::size_t growth = 4;
  double burn_in = 0.5;
  std::size_t bins = 30;
  std::string gradient = "debiased";

  std::size_t mcmc_burn_in = 1000;
  std::size_t mcmc_thin = 10;

  std::size_t d_cap = kDefaultOracleCap;
  bool mcmc_sampling = false;
  std::optional<std::string> out_dir;  // unset falls back to the environment, then "."
  std::size_t replicates = 1;

  FeatureSet feature_set() const {
    if (features == "pairwise") return FeatureSet::pairwise(d);
    if (features == "first_order") return FeatureSet::first_order(d);
    throw ConfigError("unknown feature set '" + features + "'");
  }

  SmcConfig smc_config() const {
    SmcConfig c;
    c.particles = particles == 0 ? 2 * d : particles;
    c.kernel.flip_probability = beta;
    c.kernel.sweeps = sweeps;
    if (kernel == "metropolis_bitflip") {
      c.kernel.kind = KernelKind::metropolis_bitflip;
    } else if (kernel == "gibbs_sweep") {
      c.kernel.kind = KernelKind::gibbs_sweep;
    } else {
      throw ConfigError("unknown kernel '" + kernel + "'");
    }
    if (resampling == "multinomial") {
      c.resampling = ResamplingScheme::multinomial;
    } else if (resampling == "systematic") {
      c.resampling = ResamplingScheme::systematic;
    } else {
      throw ConfigError("unknown resampling scheme '" + resampling + "'");
    }
    c.threads = threads;
    return c;
  }

  SolverConfig solver_config() const {
    SolverConfig c;
    const double offset = n0 > 0.0 ? n0 : 5.0 * static_cast<double>(d);
    if (schedule == "two_phase") {
      c.schedule = StepSchedule::two_phase(epsilon, offset, switch_n == 0 ? 2 * d : switch_n);
    } else if (schedule == "harmonic") {
      c.schedule = StepSchedule::harmonic(epsilon, offset);
    } else {
      throw ConfigError("unknown step schedule '" + schedule + "'");
    }
    c.smc = smc_config();
    c.iterations = iterations;
    c.divergence_bound = divergence_bound;
    c.normalization = state_count_scaling ? Normalization::state_count : Normalization::uniform_probability;
    c.oracle_misfit_every = d <= d_cap ? oracle_misfit_every : 0;
    c.oracle.d_cap = d_cap;
    return c;
  }

  ChainConfig chain_config() const {
    ChainConfig c;
    c.initial_step = delta0;
    c.step_exponent = step_exponent;
    c.steps = chain_steps;
    c.divergence_bound = divergence_bound;
    return c;
  }

  LevelPlan level_plan() const { return LevelPlan::make_default(base_particles, max_level, growth); }

  Prior prior_model(std::size_t parameter_count) const {
    if (prior == "flat") return Prior::flat();
    if (prior == "gaussian") return Prior::gaussian(std::vector<double>(parameter_count, prior_mean), prior_variance);
    throw ConfigError("unknown prior '" + prior + "'");
  }
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <class T>
void read(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  T v{};
  read(j, key, v);
  out = std::move(v);
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j, Mode mode) {
  using detail::read;
  detail::check_keys(j,
                     {"d", "features", "seed", "truth", "observations", "moments", "moments_path", "smc", "solver",
                      "posterior", "mcmc", "d_cap", "mcmc_sampling", "out_dir", "replicates"},
                     "config");
  ExperimentConfig c;
  c.mode = mode;
  read(j, "d", c.d);
  read(j, "features", c.features);
  read(j, "seed", c.seed);
  if (j.contains("truth")) {
    const auto& t = j.at("truth");
    detail::check_keys(t, {"lambda", "random", "coupling_matrix"}, "truth");
    read(t, "lambda", c.truth.lambda);
    read(t, "coupling_matrix", c.truth.coupling_matrix);
    if (t.contains("random")) {
      const auto& r = t.at("random");
      detail::check_keys(r, {"low", "high"}, "truth.random");
      std::pair<double, double> range{-1.0, 1.0};
      read(r, "low", range.first);
      read(r, "high", range.second);
      if (!(range.first < range.second)) throw ConfigError("truth.random needs low < high");
      c.truth.random_range = range;
    }
    const int given = int(bool(c.truth.lambda)) + int(bool(c.truth.random_range)) + int(bool(c.truth.coupling_matrix));
    if (given > 1) throw ConfigError("truth: give exactly one of lambda, random, coupling_matrix");
  }
  if (j.contains("observations")) {
    const auto& o = j.at("observations");
    detail::check_keys(o, {"path", "count", "binary"}, "observations");
    read(o, "path", c.observations_path);
    read(o, "count", c.observation_count);
    read(o, "binary", c.binary_observations);
  }
  read(j, "moments", c.moments);
  read(j, "moments_path", c.moments_path);
  if (j.contains("smc")) {
    const auto& s = j.at("smc");
    detail::check_keys(s, {"particles", "beta", "sweeps", "kernel", "resampling", "threads"}, "smc");
    read(s, "particles", c.particles);
    read(s, "beta", c.beta);
    read(s, "sweeps", c.sweeps);
    read(s, "kernel", c.kernel);
    read(s, "resampling", c.resampling);
    read(s, "threads", c.threads);
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    detail::check_keys(s,
                       {"iterations", "schedule", "epsilon", "n0", "switch", "divergence_bound",
                        "state_count_scaling", "oracle_misfit_every"},
                       "solver");
    read(s, "iterations", c.iterations);
    read(s, "schedule", c.schedule);
    read(s, "epsilon", c.epsilon);
    read(s, "n0", c.n0);
    read(s, "switch", c.switch_n);
    read(s, "divergence_bound", c.divergence_bound);
    read(s, "state_count_scaling", c.state_count_scaling);
    read(s, "oracle_misfit_every", c.oracle_misfit_every);
  }
  if (j.contains("posterior")) {
    const auto& p = j.at("posterior");
    detail::check_keys(p,
                       {"steps", "delta0", "exponent", "prior", "base_particles", "max_level", "growth", "burn_in",
                        "bins", "gradient"},
                       "posterior");
    read(p, "steps", c.chain_steps);
    read(p, "delta0", c.delta0);
    read(p, "exponent", c.step_exponent);
    read(p, "base_particles", c.base_particles);
    read(p, "max_level", c.max_level);
    read(p, "growth", c.growth);
    read(p, "burn_in", c.burn_in);
    read(p, "bins", c.bins);
    read(p, "gradient", c.gradient);
    if (p.contains("prior")) {
      const auto& pr = p.at("prior");
      detail::check_keys(pr, {"kind", "mean", "variance"}, "posterior.prior");
      read(pr, "kind", c.prior);
      read(pr, "mean", c.prior_mean);
      read(pr, "variance", c.prior_variance);
    }
  }
  if (j.contains("mcmc")) {
    const auto& m = j.at("mcmc");
    detail::check_keys(m, {"burn_in", "thin"}, "mcmc");
    read(m, "burn_in", c.mcmc_burn_in);
    read(m, "thin", c.mcmc_thin);
  }
  read(j, "d_cap", c.d_cap);
  read(j, "mcmc_sampling", c.mcmc_sampling);
  read(j, "out_dir", c.out_dir);
  read(j, "replicates", c.replicates);
  return c;
}

/// Checks the mode-specific requirements; throws ConfigError on the first problem.
inline void validate(const ExperimentConfig& c) {
  const std::string mode = mode_name(c.mode);
  if (c.d == 0 || c.d > kMaxBits) throw ConfigError(mode + ": d must be in [1, 64]");
  (void)c.feature_set();
  if (c.mode != Mode::oracle && c.mode != Mode::simulate) (void)c.smc_config().validate();
  if (c.replicates < 1) throw ConfigError("replicates must be at least 1");
  switch (c.mode) {
    case Mode::simulate:
      if (!c.truth.present()) throw ConfigError("simulate: config needs a 'truth' block");
      if (c.observation_count == 0) throw ConfigError("simulate: observations.count must be positive");
      break;
    case Mode::oracle:
      if (!c.truth.present()) throw ConfigError("oracle: config needs a 'truth' block with the parameters");
      break;
    case Mode::maxent_exact:
      if (!c.truth.present() && !c.moments && !c.moments_path) {
        throw ConfigError("maxent: give exact moments (moments / moments_path) or a truth to compute them from");
      }
      (void)c.solver_config().schedule.validate();
      break;
    case Mode::mle:
      if (!c.observations_path) throw ConfigError("mle: observations.path is required");
      (void)c.solver_config().schedule.validate();
      break;
    case Mode::posterior:
      if (!c.observations_path) throw ConfigError("posterior: observations.path is required");
      if (c.gradient != "debiased" && c.gradient != "consistent") {
        throw ConfigError("posterior: gradient must be 'debiased' or 'consistent'");
      }
      (void)c.chain_config().validate();
      (void)c.level_plan();
      (void)c.prior_model(1);
      if (!(c.burn_in >= 0.0 && c.burn_in < 1.0)) throw ConfigError("posterior: burn_in must lie in [0, 1)");
      break;
  }
}

/// Normalized, default-resolved configuration. Paths and out_dir are left
/// out so that the hash identifies the computation, not where it ran.
inline json effective_config(const ExperimentConfig& c) {
  json j;
  j["mode"] = mode_name(c.mode);
  j["d"] = c.d;
  j["features"] = c.features;
  j["seed"] = c.seed;
  if (c.truth.lambda) j["truth"]["lambda"] = *c.truth.lambda;
  if (c.truth.random_range) {
    j["truth"]["random"] = {{"low", c.truth.random_range->first}, {"high", c.truth.random_range->second}};
  }
  if (c.truth.coupling_matrix) j["truth"]["coupling_matrix"] = *c.truth.coupling_matrix;
  j["d_cap"] = c.d_cap;
  j["replicates"] = c.replicates;
  switch (c.mode) {
    case Mode::simulate:
      j["observations"] = {{"count", c.observation_count}, {"binary", c.binary_observations}};
      j["mcmc_sampling"] = c.mcmc_sampling;
      if (c.mcmc_sampling) j["mcmc"] = {{"burn_in", c.mcmc_burn_in}, {"thin", c.mcmc_thin}};
      break;
    case Mode::oracle:
      break;
    case Mode::maxent_exact:
    case Mode::mle:
    case Mode::posterior: {
      const auto smc = c.smc_config();
      j["smc"] = {{"particles", smc.particles},
                  {"beta", c.beta},
                  {"sweeps", smc.kernel.resolved_sweeps(c.d)},
                  {"kernel", c.kernel},
                  {"resampling", c.resampling}};
      if (c.moments) j["moments"] = *c.moments;
      if (c.mode == Mode::posterior) {
        j["posterior"] = {{"steps", c.chain_steps},         {"delta0", c.delta0},
                          {"exponent", c.step_exponent},    {"prior", {{"kind", c.prior}}},
                          {"base_particles", c.base_particles}, {"max_level", c.max_level},
                          {"growth", c.growth},             {"burn_in", c.burn_in},
                          {"bins", c.bins},                 {"gradient", c.gradient}};
        if (c.prior == "gaussian") {
          j["posterior"]["prior"]["mean"] = c.prior_mean;
          j["posterior"]["prior"]["variance"] = c.prior_variance;
        }
        j["solver"] = {{"divergence_bound", c.divergence_bound}};
      } else {
        const auto s = c.solver_config();
        j["solver"] = {{"iterations", c.iterations},
                       {"schedule", c.schedule},
                       {"epsilon", c.epsilon},
                       {"n0", s.schedule.offset},
                       {"switch", s.schedule.switch_iteration},
                       {"divergence_bound", c.divergence_bound},
                       {"state_count_scaling", c.state_count_scaling},
                       {"oracle_misfit_every", s.oracle_misfit_every}};
      }
      break;
    }
  }
  return j;
}

inline std::string config_hash(const ExperimentConfig& c, const std::string& extra = {}) {
  return hex64(fnv1a64(effective_config(c).dump() + extra));
}

}  // namespace maxent_smc::harness
