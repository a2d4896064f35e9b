#pragma once

// Experiment runners behind the CLI subcommands. Each runner reads an
// ExperimentConfig, writes its artifacts under an output directory and
// returns a JSON summary.
//
// Master stream layout for one run with seed s:
//   RngStream(s).child(0)  random truth
//   RngStream(s).child(1)  data simulation
//   RngStream(s).child(2)  solver / SGLD chain
//   RngStream(s).child(3)  histogram resampling

#include <atomic>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "maxent_smc/harness/config.hpp"
#include "maxent_smc/harness/io.hpp"
#include "maxent_smc/harness/observations.hpp"
#include "maxent_smc/model.hpp"
#include "maxent_smc/sgld.hpp"
#include "maxent_smc/smc.hpp"
#include "maxent_smc/solver.hpp"

namespace maxent_smc::harness {

namespace fs = std::filesystem;

enum : std::uint64_t { kTruthStream = 0, kDataStream = 1, kChainStream = 2, kSummaryStream = 3 };

/// Generating parameters from the config, or nullopt when none were given.
inline std::optional<ParamVector> resolve_truth(const ExperimentConfig& c, const FeatureSet& features) {
  const auto& t = c.truth;
  if (t.lambda) {
    ParamVector lambda(*t.lambda);
    validate(lambda, features);
    return lambda;
  }
  if (t.random_range) {
    auto rng = RngStream(c.seed).child(kTruthStream).engine();
    ParamVector lambda = ParamVector::zeros(features.size());
    const auto [lo, hi] = *t.random_range;
    for (auto& v : lambda.values) v = lo + (hi - lo) * uniform01(rng);
    return lambda;
  }
  if (t.coupling_matrix) {
    const auto& rows = *t.coupling_matrix;
    const std::size_t d = features.dimension();
    if (rows.size() != d) throw ConfigError("truth.coupling_matrix must be d x d");
    SymmetricMatrix a{d, {}};
    for (const auto& row : rows) {
      if (row.size() != d) throw ConfigError("truth.coupling_matrix must be d x d");
      a.entries.insert(a.entries.end(), row.begin(), row.end());
    }
    return from_quadratic_form(a, features, -1.0);
  }
  return std::nullopt;
}

inline json matrix_json(const ParamVector& lambda, const FeatureSet& features) {
  if (!features.is_pairwise()) return nullptr;
  const auto m = to_matrix(lambda, features);
  json rows = json::array();
  for (std::size_t i = 0; i < m.d; ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < m.d; ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

inline json labels_json(const FeatureSet& features) {
  json out = json::array();
  for (std::size_t j = 0; j < features.size(); ++j) out.push_back(features.label(j));
  return out;
}

inline double max_abs_difference(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
  return m;
}

inline void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

inline json header_json(const ExperimentConfig& c, const std::string& hash) {
  return json{{"mode", mode_name(c.mode)}, {"version", kVersion}, {"seed", c.seed}, {"config_hash", hash}};
}

// ---------------------------------------------------------------------------

/// Long single-chain Gibbs sampler for d above the oracle cap. Draws are
/// approximate: `burn_in` sweeps are discarded, then one row every `thin` sweeps.
inline std::vector<BitState> mcmc_draws(const ParamVector& lambda, const FeatureSet& features, std::size_t count,
                                        std::size_t burn_in, std::size_t thin, const RngStream& stream) {
  if (thin == 0) throw ConfigError("mcmc.thin must be positive");
  const FeatureAnnealing target(features, lambda);
  const std::size_t d = features.dimension();
  const std::size_t last = target.steps();
  const MutationKernelConfig kernel{KernelKind::gibbs_sweep, 0.5, 1};
  auto rng = stream.engine();
  BitState x{maxent_smc::detail::random_bits(rng, d)};
  double lp = target.log_density(last, x);
  for (std::size_t s = 0; s < burn_in; ++s) mutate(target, last, kernel, x, lp, rng);
  std::vector<BitState> rows;
  rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t s = 0; s < thin; ++s) mutate(target, last, kernel, x, lp, rng);
    rows.push_back(x);
  }
  return rows;
}

inline ObservationFile simulate_observations(const ExperimentConfig& c) {
  const auto features = c.feature_set();
  const auto truth = resolve_truth(c, features);
  if (!truth) throw ConfigError("simulate: config needs a 'truth' block");
  ObservationFile file;
  file.dimension = c.d;
  file.seed = c.seed;
  file.lambda = truth->values;
  file.config_hash = config_hash(c);
  const RngStream stream = RngStream(c.seed).child(kDataStream);
  const bool over_cap = c.d > c.d_cap;
  if (over_cap && !c.mcmc_sampling) {
    throw CapabilityError("simulate: d=" + std::to_string(c.d) + " exceeds the exact-sampling cap d_cap=" +
                          std::to_string(c.d_cap) + "; pass --mcmc-sampling for approximate Gibbs draws");
  }
  if (c.mcmc_sampling) {
    file.sampler = "mcmc";
    file.rows = mcmc_draws(*truth, features, c.observation_count, c.mcmc_burn_in, c.mcmc_thin, stream);
  } else {
    const OracleSampler sampler(*truth, features, OracleOptions{c.d_cap});
    auto rng = stream.engine();
    file.rows.reserve(c.observation_count);
    for (std::size_t i = 0; i < c.observation_count; ++i) file.rows.push_back(sampler(rng));
  }
  return file;
}

inline json run_simulate(const ExperimentConfig& c, const fs::path& out_dir) {
  const auto file = simulate_observations(c);
  const auto features = c.feature_set();
  const fs::path data_path = out_dir / (c.binary_observations ? "observations.bin" : "observations.txt");
  write_file(data_path, c.binary_observations ? format_observations_binary(file) : format_observations_text(file));
  json summary = header_json(c, file.config_hash);
  summary["d"] = c.d;
  summary["M"] = file.rows.size();
  summary["sampler"] = file.sampler;
  summary["approximate"] = file.sampler == "mcmc";
  if (file.sampler == "mcmc") summary["mcmc"] = {{"burn_in", c.mcmc_burn_in}, {"thin", c.mcmc_thin}};
  summary["features"] = labels_json(features);
  summary["lambda"] = *file.lambda;
  summary["Lambda"] = matrix_json(ParamVector(*file.lambda), features);
  summary["observations"] = data_path.filename().string();
  write_json(out_dir / "truth.json", summary);
  return summary;
}

// ---------------------------------------------------------------------------

inline json run_oracle(const ExperimentConfig& c, const fs::path& out_dir) {
  const auto features = c.feature_set();
  const auto truth = resolve_truth(c, features);
  if (!truth) throw ConfigError("oracle: config needs a 'truth' block with the parameters");
  const OracleOptions options{c.d_cap};
  const std::string hash = config_hash(c);
  json out = header_json(c, hash);
  out["d"] = c.d;
  out["features"] = labels_json(features);
  out["lambda"] = truth->values;
  out["log_Z"] = oracle_log_partition(*truth, features, options);
  out["Z"] = oracle_partition(*truth, features, options);
  out["moments"] = oracle_moments(*truth, features, options).values;
  out["entropy"] = oracle_entropy(*truth, features, options);
  write_json(out_dir / "oracle.json", out);
  return out;
}

// ---------------------------------------------------------------------------

inline MomentVector read_moments_file(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("moments file " + path.string() + ": " + e.what());
  }
  const json& arr = j.is_object() && j.contains("moments") ? j.at("moments") : j;
  try {
    return MomentVector(arr.get<std::vector<double>>());
  } catch (const json::exception&) {
    throw ConfigError("moments file must hold an array of numbers or {\"moments\": [...]}");
  }
}

namespace detail {

inline void write_trace(const fs::path& out_dir, const SolverTrace& trace, std::size_t parameter_count,
                        const ExperimentConfig& c, const std::string& hash) {
  std::ostringstream s;
  write_trace_csv(s, trace, parameter_count, Provenance{std::string(mode_name(c.mode)) + " trace", c.seed, hash});
  write_file(out_dir / "trace.csv", s.str());
}

inline json solve_and_report(const ExperimentConfig& c, const fs::path& out_dir, const MomentVector& target,
                             const FeatureSet& features, const std::optional<ParamVector>& truth,
                             const std::string& hash, json result) {
  const auto config = c.solver_config();
  SolveResult solved;
  try {
    solved = solve_maxent(target, features, ParamVector::zeros(features.size()), config,
                          RngStream(c.seed).child(kChainStream));
  } catch (const SolverDivergence& e) {
    write_trace(out_dir, e.trace(), features.size(), c, hash);
    result["status"] = "diverged";
    result["diverged_at"] = e.iteration();
    write_json(out_dir / "result.json", result);
    throw;
  }
  write_trace(out_dir, solved.trace, features.size(), c, hash);
  result["status"] = "ok";
  result["iterations"] = solved.trace.records.size();
  result["early_stopped"] = solved.early_stopped;
  result["lambda"] = solved.lambda.values;
  result["Lambda"] = matrix_json(solved.lambda, features);
  result["cost"] = solved.trace.total_cost();
  result["rescale"] = solved.trace.rescale_estimate ? json(*solved.trace.rescale_estimate) : json(nullptr);
  result["target_moments"] = target.values;
  if (c.d <= c.d_cap) {
    const auto model = oracle_moments(solved.lambda, features, OracleOptions{c.d_cap});
    result["model_moments"] = model.values;
    result["misfit_inf"] = max_abs_difference(model.values, target.values);
  } else {
    result["model_moments"] = nullptr;
    result["misfit_inf"] = nullptr;
  }
  if (truth) {
    result["truth_lambda"] = truth->values;
    result["truth_Lambda"] = matrix_json(*truth, features);
    result["parameter_error_inf"] = max_abs_difference(solved.lambda.values, truth->values);
  }
  write_json(out_dir / "result.json", result);
  return result;
}

}  // namespace detail

inline json run_maxent(const ExperimentConfig& c, const fs::path& out_dir) {
  const auto features = c.feature_set();
  const auto truth = resolve_truth(c, features);
  MomentVector target;
  std::string source;
  if (c.moments) {
    target = MomentVector(*c.moments);
    source = "config";
  } else if (c.moments_path) {
    target = read_moments_file(*c.moments_path);
    source = "file";
  } else {
    if (c.d > c.d_cap) {
      throw CapabilityError("maxent: exact moments from the truth need enumeration of 2^" + std::to_string(c.d) +
                            " states, above d_cap=" + std::to_string(c.d_cap) + "; supply moments_path instead");
    }
    target = oracle_moments(*truth, features, OracleOptions{c.d_cap});
    source = "oracle";
  }
  validate(target, features);
  const auto bad = moment_violations(target, features);
  if (!bad.empty()) {
    throw ConfigError("maxent: moments are not realizable by any distribution (entry " +
                      features.label(bad.front()) + " violates the bit-product bounds)");
  }
  std::string extra;
  if (c.moments_path) extra = read_file(*c.moments_path);
  const std::string hash = config_hash(c, extra);
  json result = header_json(c, hash);
  result["d"] = c.d;
  result["features"] = labels_json(features);
  result["moment_source"] = source;
  return detail::solve_and_report(c, out_dir, target, features, truth, hash, std::move(result));
}

inline json run_mle(const ExperimentConfig& c, const fs::path& out_dir) {
  if (!c.observations_path) throw ConfigError("mle: observations.path is required");
  if (!fs::exists(*c.observations_path)) {
    throw ConfigError("mle: observations file '" + *c.observations_path + "' does not exist");
  }
  const auto raw = read_file(*c.observations_path);
  const auto file = parse_observations(raw);
  if (file.dimension != c.d) {
    throw ConfigError("mle: observations have d=" + std::to_string(file.dimension) + " but config has d=" +
                      std::to_string(c.d));
  }
  const auto features = c.feature_set();
  auto truth = resolve_truth(c, features);
  if (!truth && file.lambda && file.lambda->size() == features.size()) truth = ParamVector(*file.lambda);
  const auto empirical = empirical_moments(file.observations(), features);
  const std::string hash = config_hash(c, hex64(fnv1a64(raw)));
  json result = header_json(c, hash);
  result["d"] = c.d;
  result["M"] = file.rows.size();
  result["observations_sampler"] = file.sampler;
  result["features"] = labels_json(features);
  json warnings = json::array();
  for (auto j : boundary_moments(empirical)) warnings.push_back(features.label(j));
  result["boundary_moments"] = warnings;
  return detail::solve_and_report(c, out_dir, empirical, features, truth, hash, std::move(result));
}

// ---------------------------------------------------------------------------

inline json histogram_json(const PosteriorSummary& s, const FeatureSet& features) {
  json marginals = json::array();
  for (const auto& h : s.marginals) {
    marginals.push_back({{"coordinate", features.label(h.coordinate)},
                         {"index", h.coordinate},
                         {"low", h.low},
                         {"high", h.high},
                         {"counts", h.counts}});
  }
  json pairwise = json::array();
  for (const auto& h : s.pairwise) {
    pairwise.push_back({{"first", features.label(h.first)},
                        {"second", features.label(h.second)},
                        {"low_first", h.low_first},
                        {"high_first", h.high_first},
                        {"low_second", h.low_second},
                        {"high_second", h.high_second},
                        {"counts", h.counts}});
  }
  json intervals = json::array();
  for (const auto& [lo, hi] : s.intervals) intervals.push_back({lo, hi});
  return json{{"kept", s.kept},     {"mean", s.mean},          {"covariance", s.covariance},
              {"intervals", intervals}, {"marginals", marginals}, {"pairwise", pairwise}};
}

inline json run_posterior(const ExperimentConfig& c, const fs::path& out_dir) {
  if (!c.observations_path) throw ConfigError("posterior: observations.path is required");
  if (!fs::exists(*c.observations_path)) {
    throw ConfigError("posterior: observations file '" + *c.observations_path + "' does not exist");
  }
  const auto raw = read_file(*c.observations_path);
  const auto file = parse_observations(raw);
  if (file.dimension != c.d) {
    throw ConfigError("posterior: observations have d=" + std::to_string(file.dimension) + " but config has d=" +
                      std::to_string(c.d));
  }
  const auto features = c.feature_set();
  auto truth = resolve_truth(c, features);
  if (!truth && file.lambda && file.lambda->size() == features.size()) truth = ParamVector(*file.lambda);
  const PosteriorData data{empirical_moments(file.observations(), features), file.rows.size()};
  const auto prior = c.prior_model(features.size());
  const GradientFn gradient = c.gradient == "consistent"
                                  ? consistent_gradient(features, data, prior, c.smc_config())
                                  : debiased_gradient(features, data, prior, c.level_plan(), c.smc_config());
  const std::string hash = config_hash(c, hex64(fnv1a64(raw)));
  const Provenance prov{"posterior samples", c.seed, hash};
  auto write_samples = [&](const std::vector<WeightedSample>& samples) {
    std::ostringstream s;
    write_samples_csv(s, samples, features.size(), prov);
    write_file(out_dir / "samples.csv", s.str());
  };
  std::vector<WeightedSample> samples;
  try {
    samples = run_chain(ParamVector::zeros(features.size()), gradient, c.chain_config(),
                        RngStream(c.seed).child(kChainStream));
  } catch (const ChainDivergence& e) {
    write_samples(e.samples());
    throw;
  }
  write_samples(samples);

  SummaryOptions options;
  options.burn_in = c.burn_in;
  options.bins = c.bins;
  if (features.is_pairwise()) {
    for (std::size_t i = 0; i < c.d; ++i) options.coordinates.push_back(*features.pair_index(i, i));
  }
  const auto summary = posterior_summary(samples, options, RngStream(c.seed).child(kSummaryStream));
  json out = header_json(c, hash);
  out["d"] = c.d;
  out["M"] = file.rows.size();
  out["gradient"] = c.gradient;
  out["features"] = labels_json(features);
  out["burn_in"] = c.burn_in;
  out["empirical_moments"] = data.empirical.values;
  out["summary"] = histogram_json(summary, features);
  if (truth) {
    out["truth_lambda"] = truth->values;
    json inside = json::array();
    for (std::size_t j = 0; j < features.size(); ++j) {
      inside.push_back(summary.intervals[j].first <= (*truth)[j] && (*truth)[j] <= summary.intervals[j].second);
    }
    out["truth_inside_interval"] = inside;
  }
  write_json(out_dir / "histograms.json", out);
  return out;
}

// ---------------------------------------------------------------------------

inline json run_single(const ExperimentConfig& c, const fs::path& out_dir) {
  switch (c.mode) {
    case Mode::simulate: return run_simulate(c, out_dir);
    case Mode::oracle: return run_oracle(c, out_dir);
    case Mode::maxent_exact: return run_maxent(c, out_dir);
    case Mode::mle: return run_mle(c, out_dir);
    case Mode::posterior: return run_posterior(c, out_dir);
  }
  throw ConfigError("unknown mode");
}

/// Seed of replicate r: a fixed function of the master seed and r.
inline std::uint64_t replicate_seed(std::uint64_t seed, std::size_t r) {
  return RngStream(seed).child(0x5eed0000ULL + r).key();
}

inline std::string replicate_dir_name(std::size_t r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "replicate_%03zu", r);
  return buf;
}

/// Runs c.replicates copies on up to `threads` threads. Outputs of replicate
/// r go to out_dir/replicate_XXX; the merged replicates.json is in replicate
/// order whatever the scheduling. The first failing replicate's error is
/// rethrown after the summary is written.
inline json run_experiment(const ExperimentConfig& c, const fs::path& out_dir, std::size_t threads = 1) {
  validate(c);
  if (c.replicates == 1) return run_single(c, out_dir);
  std::vector<json> results(c.replicates);
  std::vector<std::exception_ptr> errors(c.replicates);
  std::vector<std::string> messages(c.replicates);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < c.replicates; r = next++) {
      ExperimentConfig rc = c;
      rc.seed = replicate_seed(c.seed, r);
      rc.replicates = 1;
      try {
        results[r] = run_single(rc, out_dir / replicate_dir_name(r));
      } catch (const std::exception& e) {
        errors[r] = std::current_exception();
        messages[r] = e.what();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n = std::max<std::size_t>(1, std::min(threads, c.replicates));
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  json merged = header_json(c, config_hash(c));
  merged["replicates"] = json::array();
  for (std::size_t r = 0; r < c.replicates; ++r) {
    json entry{{"index", r}, {"seed", replicate_seed(c.seed, r)}, {"directory", replicate_dir_name(r)}};
    if (errors[r]) {
      entry["status"] = "failed";
      entry["error"] = messages[r];
    } else {
      entry["status"] = "ok";
      for (const char* key : {"misfit_inf", "parameter_error_inf", "log_Z", "cost"}) {
        if (results[r].contains(key)) entry[key] = results[r][key];
      }
    }
    merged["replicates"].push_back(entry);
  }
  write_json(out_dir / "replicates.json", merged);
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return merged;
}

}  // namespace maxent_smc::harness
