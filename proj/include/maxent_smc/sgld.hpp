#pragma once

// Stochastic-gradient Langevin dynamics over lambda for the posterior
// P(lambda | Y) proportional to prod_i pi(y_i | lambda) P(lambda), driven by
// the debiased gradient M Delta_L(m_hat - phi | lambda) / p_L + grad log P.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maxent_smc/debias.hpp"
#include "maxent_smc/errors.hpp"
#include "maxent_smc/model.hpp"
#include "maxent_smc/random.hpp"
#include "maxent_smc/smc.hpp"

namespace maxent_smc {

enum class PriorKind { flat, gaussian };

struct Prior {
  PriorKind kind = PriorKind::flat;
  std::vector<double> mean;  // gaussian only
  double variance = 1.0;     // isotropic sigma^2

  static Prior flat() { return Prior{}; }
  static Prior gaussian(std::vector<double> mean, double variance) {
    if (!(variance > 0.0)) throw ConfigError("gaussian prior needs positive variance");
    return Prior{PriorKind::gaussian, std::move(mean), variance};
  }

  std::vector<double> log_density_gradient(const ParamVector& lambda) const {
    std::vector<double> g(lambda.size(), 0.0);
    if (kind == PriorKind::gaussian) {
      if (mean.size() != lambda.size()) throw ConfigError("prior mean has wrong length");
      for (std::size_t j = 0; j < g.size(); ++j) g[j] = -(lambda[j] - mean[j]) / variance;
    }
    return g;
  }

  double log_density(const ParamVector& lambda) const {
    if (kind == PriorKind::flat) return 0.0;
    double s = 0.0;
    for (std::size_t j = 0; j < lambda.size(); ++j) s += (lambda[j] - mean[j]) * (lambda[j] - mean[j]);
    return -0.5 * s / variance;
  }
};

/// Data summary entering the likelihood: m_hat and M.
struct PosteriorData {
  MomentVector empirical;
  std::size_t observations = 0;  // M
};

/// M * Delta_L(m_hat - phi | lambda) / p_L + grad log P(lambda), one level draw for all coordinates.
inline std::vector<double> gradient_estimate(const ParamVector& lambda, const FeatureSet& features,
                                             const PosteriorData& data, const Prior& prior, const LevelPlan& plan,
                                             const SmcConfig& smc, const RngStream& stream,
                                             std::uint64_t* cost = nullptr) {
  auto g = prior.log_density_gradient(lambda);
  if (data.observations == 0) return g;
  validate(data.empirical, features);
  const FeatureAnnealing schedule(features, lambda);
  const auto& m = data.empirical;
  const auto est = single_term_estimate(
      [&](BitState x) {
        std::vector<double> v(features.size());
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = m[j] - features.evaluate_one(j, x);
        return v;
      },
      schedule, smc, plan, stream);
  const double scale = static_cast<double>(data.observations);
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += scale * est.values[j];
  if (cost) *cost += est.cost;
  return g;
}

/// Exact M Pi(m_hat - phi | lambda) + grad log P(lambda) by enumeration.
inline std::vector<double> oracle_gradient(const ParamVector& lambda, const FeatureSet& features,
                                           const PosteriorData& data, const Prior& prior,
                                           const OracleOptions& options = {}) {
  auto g = prior.log_density_gradient(lambda);
  if (data.observations == 0) return g;
  const auto model = oracle_moments(lambda, features, options);
  for (std::size_t j = 0; j < g.size(); ++j) {
    g[j] += static_cast<double>(data.observations) * (data.empirical[j] - model[j]);
  }
  return g;
}

/// Gradient source for run_chain: (lambda, stream) -> gradient of log posterior.
using GradientFn = std::function<std::vector<double>(const ParamVector&, const RngStream&)>;

/// The debiased estimator; unbiased up to the truncation at L_max.
inline GradientFn debiased_gradient(FeatureSet features, PosteriorData data, Prior prior, LevelPlan plan,
                                    SmcConfig smc) {
  plan.validate();
  return [features = std::move(features), data = std::move(data), prior = std::move(prior),
          plan = std::move(plan), smc](const ParamVector& lambda, const RngStream& stream) {
    return gradient_estimate(lambda, features, data, prior, plan, smc, stream);
  };
}

/// Experimental: M (m_hat - eta^N_J(phi)) from one SMC run. Biased but
/// consistent as N grows; no convergence guarantee is claimed for SGLD with it.
inline GradientFn consistent_gradient(FeatureSet features, PosteriorData data, Prior prior, SmcConfig smc) {
  return [features = std::move(features), data = std::move(data), prior = std::move(prior),
          smc](const ParamVector& lambda, const RngStream& stream) {
    auto g = prior.log_density_gradient(lambda);
    if (data.observations == 0) return g;
    const auto pop = smc_run(FeatureAnnealing(features, lambda), smc, stream);
    const auto eta = estimate_target(pop, [&](BitState x) { return features.evaluate(x); });
    for (std::size_t j = 0; j < g.size(); ++j) {
      g[j] += static_cast<double>(data.observations) * (data.empirical[j] - eta[j]);
    }
    return g;
  };
}

inline GradientFn exact_gradient(FeatureSet features, PosteriorData data, Prior prior, OracleOptions options = {}) {
  return [features = std::move(features), data = std::move(data), prior = std::move(prior),
          options](const ParamVector& lambda, const RngStream&) {
    return oracle_gradient(lambda, features, data, prior, options);
  };
}

struct ChainConfig {
  double initial_step = 0.01;  // delta_0
  double step_exponent = 1.0 / 3.0;
  std::size_t steps = 1000;  // K
  double divergence_bound = 50.0;
  double noise_scale = 1.0;  // 0 freezes the injected noise (test hook)

  double step(std::size_t n) const noexcept {
    return initial_step * std::pow(static_cast<double>(n), -step_exponent);
  }

  void validate() const {
    if (!(initial_step > 0.0)) throw ConfigError("SGLD needs delta_0 > 0");
    if (steps < 1) throw ConfigError("SGLD needs at least one step");
    if (!(step_exponent >= 0.0)) throw ConfigError("step exponent must be non-negative");
  }
};

struct WeightedSample {
  std::size_t n = 0;
  std::vector<double> lambda;
  double weight = 0.0;  // delta_n
};

class ChainDivergence : public DivergenceError {
 public:
  ChainDivergence(const std::string& what, std::size_t iteration, std::vector<WeightedSample> samples)
      : DivergenceError(what, iteration), samples_(std::move(samples)) {}
  const std::vector<WeightedSample>& samples() const noexcept { return samples_; }

 private:
  std::vector<WeightedSample> samples_;
};

/// Euler-Maruyama with unit preconditioner:
///   lambda^{n+1} = lambda^n + (delta_n / 2) g(lambda^n) + sqrt(delta_n) xi_n.
/// Sample n records lambda^n (n = 1..K, lambda^1 = lambda_0) with weight delta_n.
inline std::vector<WeightedSample> run_chain(const ParamVector& lambda0, const GradientFn& gradient,
                                             const ChainConfig& config, const RngStream& stream) {
  config.validate();
  if (!gradient) throw ConfigError("run_chain needs a gradient source");
  std::vector<WeightedSample> samples;
  samples.reserve(config.steps);
  ParamVector lambda = lambda0;
  for (std::size_t n = 1; n <= config.steps; ++n) {
    const double delta = config.step(n);
    samples.push_back(WeightedSample{n, lambda.values, delta});
    const RngStream step_stream = stream.child(n);
    const auto g = gradient(lambda, step_stream.child(0));
    auto rng = step_stream.child(1).engine();
    const double noise_sd = std::sqrt(delta) * config.noise_scale;
    for (std::size_t j = 0; j < lambda.size(); ++j) {
      lambda[j] += 0.5 * delta * g[j] + noise_sd * standard_normal(rng);
    }
    const double size = lambda.max_abs();
    if (!(size <= config.divergence_bound)) {
      throw ChainDivergence("SGLD chain diverged at step " + std::to_string(n) + ": ||lambda||_inf = " +
                                std::to_string(size) + " (reduce delta_0)",
                            n, std::move(samples));
    }
  }
  return samples;
}

/// Convenience overload: debiased gradient from data, prior and level plan.
inline std::vector<WeightedSample> run_chain(const ParamVector& lambda0, const FeatureSet& features,
                                             const PosteriorData& data, const Prior& prior, const LevelPlan& plan,
                                             const SmcConfig& smc, const ChainConfig& config,
                                             const RngStream& stream) {
  return run_chain(lambda0, debiased_gradient(features, data, prior, plan, smc), config, stream);
}

// ---------------------------------------------------------------------------
// Post-processing.

/// sum_n delta_n f(lambda^n) / sum_n delta_n.
template <class F>
double weighted_average(std::span<const WeightedSample> samples, F&& f) {
  double num = 0.0, den = 0.0;
  for (const auto& s : samples) {
    num += s.weight * f(s.lambda);
    den += s.weight;
  }
  if (!(den > 0.0)) throw ConfigError("weighted average over an empty sample set");
  return num / den;
}

inline std::span<const WeightedSample> after_burn_in(const std::vector<WeightedSample>& samples, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("burn-in fraction must lie in [0, 1)");
  const auto skip = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(samples.size())));
  if (skip >= samples.size()) throw ConfigError("no samples left after burn-in");
  return std::span<const WeightedSample>(samples).subspan(skip);
}

/// Smallest value v with weighted CDF(v) >= q for coordinate j.
inline double weighted_quantile(std::span<const WeightedSample> samples, std::size_t j, double q) {
  std::vector<std::pair<double, double>> v;
  v.reserve(samples.size());
  double total = 0.0;
  for (const auto& s : samples) {
    v.emplace_back(s.lambda.at(j), s.weight);
    total += s.weight;
  }
  std::sort(v.begin(), v.end());
  double acc = 0.0;
  for (const auto& [x, w] : v) {
    acc += w;
    if (acc >= q * total) return x;
  }
  return v.back().first;
}

struct Histogram1D {
  std::size_t coordinate = 0;
  double low = 0.0, high = 0.0;
  std::vector<std::size_t> counts;
};

struct Histogram2D {
  std::size_t first = 0, second = 0;
  double low_first = 0.0, high_first = 0.0, low_second = 0.0, high_second = 0.0;
  std::vector<std::vector<std::size_t>> counts;  // [bin of first][bin of second]
};

struct SummaryOptions {
  double burn_in = 0.5;
  std::size_t bins = 30;
  std::vector<std::size_t> coordinates;  // histogram coordinates; empty selects all
  std::size_t resample_draws = 0;        // 0 draws as many as there are kept samples
  double interval_coverage = 0.99;
};

struct PosteriorSummary {
  std::size_t kept = 0;
  std::vector<double> mean;
  std::vector<std::vector<double>> covariance;
  std::vector<std::pair<double, double>> intervals;  // central weighted intervals per coordinate
  std::vector<Histogram1D> marginals;
  std::vector<Histogram2D> pairwise;

  double standard_deviation(std::size_t j) const { return std::sqrt(covariance[j][j]); }
};

/// Moments and intervals by direct delta-weighted averaging; histograms from
/// a weight-proportional resample of the post-burn-in chain.
inline PosteriorSummary posterior_summary(const std::vector<WeightedSample>& samples, const SummaryOptions& options,
                                          const RngStream& stream) {
  const auto kept = after_burn_in(samples, options.burn_in);
  const std::size_t dim = kept.front().lambda.size();
  PosteriorSummary out;
  out.kept = kept.size();

  double total = 0.0;
  out.mean.assign(dim, 0.0);
  for (const auto& s : kept) {
    total += s.weight;
    for (std::size_t j = 0; j < dim; ++j) out.mean[j] += s.weight * s.lambda[j];
  }
  for (double& v : out.mean) v /= total;
  out.covariance.assign(dim, std::vector<double>(dim, 0.0));
  for (const auto& s : kept) {
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = a; b < dim; ++b) {
        out.covariance[a][b] += s.weight * (s.lambda[a] - out.mean[a]) * (s.lambda[b] - out.mean[b]);
      }
    }
  }
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = a; b < dim; ++b) {
      out.covariance[a][b] /= total;
      out.covariance[b][a] = out.covariance[a][b];
    }
  }
  const double tail = 0.5 * (1.0 - options.interval_coverage);
  for (std::size_t j = 0; j < dim; ++j) {
    out.intervals.emplace_back(weighted_quantile(kept, j, tail), weighted_quantile(kept, j, 1.0 - tail));
  }

  std::vector<std::size_t> coords = options.coordinates;
  if (coords.empty()) {
    coords.resize(dim);
    std::iota(coords.begin(), coords.end(), 0);
  }
  for (auto c : coords) {
    if (c >= dim) throw ConfigError("histogram coordinate out of range");
  }
  std::vector<double> w(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) w[i] = kept[i].weight;
  auto rng = stream.engine();
  const std::size_t draws = options.resample_draws == 0 ? kept.size() : options.resample_draws;
  const auto picks = resample_multinomial(w, draws, rng);
  const std::size_t bins = std::max<std::size_t>(1, options.bins);

  std::vector<std::pair<double, double>> range(dim);
  for (auto c : coords) {
    double lo = kept.front().lambda[c], hi = lo;
    for (const auto& s : kept) {
      lo = std::min(lo, s.lambda[c]);
      hi = std::max(hi, s.lambda[c]);
    }
    if (hi <= lo) hi = lo + 1e-12;
    range[c] = {lo, hi};
  }
  auto bin_of = [&](std::size_t c, double v) {
    const auto [lo, hi] = range[c];
    const auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    return std::min(b, bins - 1);
  };
  for (auto c : coords) {
    Histogram1D h{c, range[c].first, range[c].second, std::vector<std::size_t>(bins, 0)};
    for (auto p : picks) ++h.counts[bin_of(c, kept[p].lambda[c])];
    out.marginals.push_back(std::move(h));
  }
  for (std::size_t a = 0; a < coords.size(); ++a) {
    for (std::size_t b = a + 1; b < coords.size(); ++b) {
      const auto ca = coords[a], cb = coords[b];
      Histogram2D h{ca, cb, range[ca].first, range[ca].second, range[cb].first, range[cb].second,
                    std::vector<std::vector<std::size_t>>(bins, std::vector<std::size_t>(bins, 0))};
      for (auto p : picks) ++h.counts[bin_of(ca, kept[p].lambda[ca])][bin_of(cb, kept[p].lambda[cb])];
      out.pairwise.push_back(std::move(h));
    }
  }
  return out;
}

/// Potential scale reduction for coordinate j across independent chains
/// (plain, unweighted post-burn-in draws). Values near 1 indicate agreement.
inline double gelman_rubin(const std::vector<std::vector<WeightedSample>>& chains, std::size_t j,
                           double burn_in = 0.5) {
  if (chains.size() < 2) throw ConfigError("R-hat needs at least two chains");
  std::vector<double> means, vars;
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& chain : chains) n = std::min(n, after_burn_in(chain, burn_in).size());
  if (n < 2) throw ConfigError("R-hat needs at least two kept samples per chain");
  for (const auto& chain : chains) {
    const auto kept = after_burn_in(chain, burn_in).first(n);
    double mean = 0.0;
    for (const auto& s : kept) mean += s.lambda.at(j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& s : kept) var += (s.lambda[j] - mean) * (s.lambda[j] - mean);
    means.push_back(mean);
    vars.push_back(var / static_cast<double>(n - 1));
  }
  const double m = static_cast<double>(chains.size());
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double between = 0.0;
  for (double v : means) between += (v - grand) * (v - grand);
  between *= static_cast<double>(n) / (m - 1.0);
  const double within = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
  const double pooled = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * within + between / static_cast<double>(n);
  return std::sqrt(pooled / within);
}

}  // namespace maxent_smc
