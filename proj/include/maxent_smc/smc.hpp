#pragma once

// SMC sampler with resampling, its resampling-free AIS variant, mutation
// kernels and the particle estimators.
//
// Normalization convention: gamma_0 is the uniform *probability* 2^{-d}, so
// Gamma_0(1) = 1 and every intermediate density carries the same 2^{-d}
// factor. Unnormalized estimates therefore target Q(f|lambda) / 2^d; pass
// Normalization::state_count to get Q(f|lambda) itself.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "maxent_smc/errors.hpp"
#include "maxent_smc/model.hpp"
#include "maxent_smc/random.hpp"

namespace maxent_smc {

/// A sequence of unnormalized log densities gamma_0..gamma_J over {0,1}^d.
///
/// gamma_0 must be the uniform probability 2^{-d} (it is sampled exactly by
/// drawing independent fair bits). log_ratio(j, x) is log G_j(x) =
/// log gamma_{j+1}(x) - log gamma_j(x) and must be finite everywhere.
template <class S>
concept AnnealingSchedule = requires(const S& s, std::size_t j, BitState x) {
  { s.dimension() } -> std::convertible_to<std::size_t>;
  { s.steps() } -> std::convertible_to<std::size_t>;
  { s.log_density(j, x) } -> std::convertible_to<double>;
  { s.log_ratio(j, x) } -> std::convertible_to<double>;
};

/// gamma_j(x) = 2^{-d} exp(sum_{i<=j} lambda_i phi_i(x)): one constraint per step.
class FeatureAnnealing {
 public:
  FeatureAnnealing(const FeatureSet& features, const ParamVector& lambda)
      : d_(features.dimension()),
        masks_(features.masks().begin(), features.masks().end()),
        lambda_(lambda.values),
        log_base_(-static_cast<double>(features.dimension()) * std::numbers::ln2) {
    validate(lambda, features);
  }

  std::size_t dimension() const noexcept { return d_; }
  std::size_t steps() const noexcept { return masks_.size(); }

  double log_density(std::size_t j, BitState x) const noexcept {
    double s = log_base_;
    for (std::size_t i = 0; i < j; ++i) {
      if ((x.word & masks_[i]) == masks_[i]) s += lambda_[i];
    }
    return s;
  }

  double log_ratio(std::size_t j, BitState x) const noexcept {
    return (x.word & masks_[j]) == masks_[j] ? lambda_[j] : 0.0;
  }

 private:
  std::size_t d_;
  std::vector<std::uint64_t> masks_;
  std::vector<double> lambda_;
  double log_base_;
};

/// User-supplied path. `log_target(j, x)` gives log gamma_j(x) for j >= 1,
/// up to the convention that gamma_0 is the uniform probability.
class CustomSchedule {
 public:
  using LogTarget = std::function<double(std::size_t, BitState)>;

  CustomSchedule(std::size_t d, std::size_t steps, LogTarget log_target)
      : d_(d), steps_(steps), log_target_(std::move(log_target)),
        log_base_(-static_cast<double>(d) * std::numbers::ln2) {
    if (d == 0 || d > kMaxBits) throw ConfigError("custom schedule dimension out of range");
    if (!log_target_) throw ConfigError("custom schedule needs a target callback");
  }

  std::size_t dimension() const noexcept { return d_; }
  std::size_t steps() const noexcept { return steps_; }

  double log_density(std::size_t j, BitState x) const {
    return j == 0 ? log_base_ : log_target_(j, x);
  }
  double log_ratio(std::size_t j, BitState x) const {
    return log_density(j + 1, x) - log_density(j, x);
  }

 private:
  std::size_t d_;
  std::size_t steps_;
  LogTarget log_target_;
  double log_base_;
};

enum class KernelKind { metropolis_bitflip, gibbs_sweep };
enum class ResamplingScheme { multinomial, systematic };
enum class Normalization { uniform_probability, state_count };

struct MutationKernelConfig {
  KernelKind kind = KernelKind::metropolis_bitflip;
  double flip_probability = 0.6;  // beta
  std::size_t sweeps = 0;         // kernel applications per step; 0 selects d

  std::size_t resolved_sweeps(std::size_t d) const noexcept { return sweeps == 0 ? d : sweeps; }

  void validate() const {
    if (!(flip_probability > 0.0 && flip_probability < 1.0)) {
      throw ConfigError("flip probability must lie in (0, 1)");
    }
  }
};

struct SmcConfig {
  std::size_t particles = 0;  // N
  MutationKernelConfig kernel;
  ResamplingScheme resampling = ResamplingScheme::multinomial;
  std::size_t threads = 1;

  void validate() const {
    if (particles < 2) throw ConfigError("SMC needs at least 2 particles");
    kernel.validate();
  }
};

/// Target evaluations spent by one particle over the full path.
inline std::uint64_t per_particle_cost(std::size_t steps, std::size_t d, const MutationKernelConfig& kernel) {
  const std::uint64_t per_sweep = kernel.kind == KernelKind::gibbs_sweep ? d : 1;
  return static_cast<std::uint64_t>(steps) * (1 + kernel.resolved_sweeps(d) * per_sweep);
}

namespace detail {

/// Runs body(i) for i in [0, n) on up to `threads` threads, contiguous chunks.
template <class Body>
void parallel_for(std::size_t n, std::size_t threads, Body&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
}

inline std::uint64_t random_bits(SplitMix64& rng, std::size_t d) {
  return d >= kMaxBits ? rng() : (rng() & low_mask(d));
}

/// Each of the d low bits set independently with probability p.
inline std::uint64_t bernoulli_mask(SplitMix64& rng, std::size_t d, double p) {
  std::uint64_t m = 0;
  for (std::size_t i = 0; i < d; ++i) {
    if (uniform01(rng) < p) m |= std::uint64_t{1} << i;
  }
  return m;
}

}  // namespace detail

/// Applies the step-j kernel (invariant for eta_j) `sweeps` times in place.
/// `log_density` caches log gamma_j(x) and is kept current. Returns evaluations.
template <AnnealingSchedule Schedule>
std::uint64_t mutate(const Schedule& schedule, std::size_t j, const MutationKernelConfig& kernel,
                     BitState& x, double& log_density, SplitMix64& rng) {
  const std::size_t d = schedule.dimension();
  const std::size_t sweeps = kernel.resolved_sweeps(d);
  std::uint64_t evals = 0;
  if (kernel.kind == KernelKind::metropolis_bitflip) {
    for (std::size_t s = 0; s < sweeps; ++s) {
      // Symmetric proposal: independent Bernoulli(beta) flips of every bit.
      const BitState proposal = x.flipped(detail::bernoulli_mask(rng, d, kernel.flip_probability));
      const double lp = schedule.log_density(j, proposal);
      ++evals;
      const double log_u = std::log(uniform_open_low(rng));
      if (log_u < lp - log_density) {
        x = proposal;
        log_density = lp;
      }
    }
  } else {
    for (std::size_t s = 0; s < sweeps; ++s) {
      for (std::size_t i = 0; i < d; ++i) {
        const BitState other = x.flipped(std::uint64_t{1} << i);
        const double lp_other = schedule.log_density(j, other);
        ++evals;
        // P(take other) = gamma(other) / (gamma(x) + gamma(other))
        const double p_other = 1.0 / (1.0 + std::exp(log_density - lp_other));
        if (uniform01(rng) < p_other) {
          x = other;
          log_density = lp_other;
        }
      }
    }
  }
  return evals;
}

// ---------------------------------------------------------------------------
// Weights and resampling.

/// exp-normalized weights summing to one; max-subtracted for stability.
inline std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  if (log_weights.empty()) throw ConfigError("cannot normalize an empty weight vector");
  const double mx = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(mx)) {
    throw std::logic_error("weights have no finite maximum; the annealing path violates 0 < G < inf");
  }
  std::vector<double> w(log_weights.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[i] - mx);
    s += w[i];
  }
  for (double& v : w) v /= s;
  return w;
}

/// log( (1/N) sum_i exp(v_i) ).
inline double log_mean_exp(std::span<const double> v) {
  return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

inline double effective_sample_size(std::span<const double> normalized_weights) {
  double s2 = 0.0;
  for (double w : normalized_weights) s2 += w * w;
  return 1.0 / s2;
}

/// Multinomial ancestor indices: one uniform per offspring, inverse CDF.
inline std::vector<std::size_t> resample_multinomial(std::span<const double> weights, std::size_t count,
                                                     SplitMix64& rng) {
  std::vector<double> cdf(weights.begin(), weights.end());
  for (std::size_t i = 1; i < cdf.size(); ++i) cdf[i] += cdf[i - 1];
  std::vector<std::size_t> out(count);
  for (auto& idx : out) {
    const double u = uniform01(rng) * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  }
  return out;
}

/// Systematic ancestor indices: a single uniform offset on a regular grid.
inline std::vector<std::size_t> resample_systematic(std::span<const double> weights, std::size_t count,
                                                    SplitMix64& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double step = total / static_cast<double>(count);
  double u = uniform01(rng) * step;
  std::vector<std::size_t> out(count);
  std::size_t i = 0;
  double acc = weights[0];
  for (std::size_t n = 0; n < count; ++n) {
    while (u >= acc && i + 1 < weights.size()) acc += weights[++i];
    out[n] = i;
    u += step;
  }
  return out;
}

// ---------------------------------------------------------------------------
// SMC sampler.

struct ParticlePopulation {
  std::size_t dimension = 0;
  std::vector<BitState> states;
  std::vector<double> log_weights;       // all zero after the final resampling
  std::vector<double> log_z_increments;  // log eta^N_j(G_j), j = 0..J-1
  std::vector<double> ess;               // ESS of the weights at each step
  std::size_t step = 0;                  // completed steps
  std::uint64_t cost = 0;                // target evaluations

  std::size_t size() const noexcept { return states.size(); }

  /// log prod_j eta^N_j(G_j), the log of Gamma^N_J(1).
  double log_normalizer() const noexcept {
    double s = 0.0;
    for (double v : log_z_increments) s += v;
    return s;
  }
};

/// Algorithm: x_0 ~ uniform; for j = 1..J weight by G_{j-1}, resample,
/// mutate with a kernel leaving eta_j invariant.
///
/// Per-particle work draws from stream.child(2j).child(i) and resampling
/// from stream.child(2j+1), so results do not depend on `threads`.
template <AnnealingSchedule Schedule>
ParticlePopulation smc_run(const Schedule& schedule, const SmcConfig& config, const RngStream& stream) {
  config.validate();
  const std::size_t n = config.particles;
  const std::size_t d = schedule.dimension();
  const std::size_t steps = schedule.steps();

  ParticlePopulation pop;
  pop.dimension = d;
  pop.states.resize(n);
  pop.log_weights.assign(n, 0.0);
  pop.log_z_increments.reserve(steps);
  pop.ess.reserve(steps);

  std::vector<double> log_density(n);
  {
    const RngStream init = stream.child(0);
    detail::parallel_for(n, config.threads, [&](std::size_t i) {
      auto rng = init.child(i).engine();
      pop.states[i] = BitState{detail::random_bits(rng, d)};
      log_density[i] = schedule.log_density(0, pop.states[i]);
    });
  }

  std::vector<std::uint64_t> evals(n, 0);
  std::vector<BitState> next_states(n);
  std::vector<double> next_density(n);
  for (std::size_t j = 1; j <= steps; ++j) {
    detail::parallel_for(n, config.threads, [&](std::size_t i) {
      pop.log_weights[i] = schedule.log_ratio(j - 1, pop.states[i]);
      log_density[i] += pop.log_weights[i];
      ++evals[i];
    });
    pop.log_z_increments.push_back(log_mean_exp(pop.log_weights));
    const auto w = normalize_log_weights(pop.log_weights);
    pop.ess.push_back(effective_sample_size(w));

    auto resample_rng = stream.child(2 * j + 1).engine();
    const auto ancestors = config.resampling == ResamplingScheme::multinomial
                               ? resample_multinomial(w, n, resample_rng)
                               : resample_systematic(w, n, resample_rng);
    for (std::size_t i = 0; i < n; ++i) {
      next_states[i] = pop.states[ancestors[i]];
      next_density[i] = log_density[ancestors[i]];
    }
    pop.states.swap(next_states);
    log_density.swap(next_density);
    std::fill(pop.log_weights.begin(), pop.log_weights.end(), 0.0);

    const RngStream mutate_stream = stream.child(2 * j);
    detail::parallel_for(n, config.threads, [&](std::size_t i) {
      auto rng = mutate_stream.child(i).engine();
      evals[i] += mutate(schedule, j, config.kernel, pop.states[i], log_density[i], rng);
    });
    pop.step = j;
  }
  for (auto e : evals) pop.cost += e;
  return pop;
}

namespace detail {

template <class F>
std::vector<double> as_vector(F& f, BitState x) {
  using R = std::invoke_result_t<F&, BitState>;
  if constexpr (std::is_arithmetic_v<R>) {
    return {static_cast<double>(f(x))};
  } else {
    return std::vector<double>(f(x));
  }
}

}  // namespace detail

/// eta^N_J(f): equally weighted particle average (weights are uniform after resampling).
/// f maps BitState to a number or to a vector of numbers.
template <class F>
std::vector<double> estimate_target(const ParticlePopulation& pop, F&& f) {
  if (pop.states.empty()) throw ConfigError("empty population");
  std::vector<double> acc;
  for (const auto& x : pop.states) {
    const auto v = detail::as_vector(f, x);
    if (acc.empty()) acc.assign(v.size(), 0.0);
    if (v.size() != acc.size()) throw ConfigError("estimate_target: f changed output length");
    for (std::size_t k = 0; k < v.size(); ++k) acc[k] += v[k];
  }
  for (double& v : acc) v /= static_cast<double>(pop.states.size());
  return acc;
}

/// Gamma^N_J(f) = prod_j eta^N_j(G_j) * eta^N_J(f). Unbiased for Gamma_J(f).
template <class F>
std::vector<double> estimate_unnormalized(const ParticlePopulation& pop, F&& f,
                                          Normalization normalization = Normalization::uniform_probability) {
  auto est = estimate_target(pop, std::forward<F>(f));
  double scale = std::exp(pop.log_normalizer());
  if (normalization == Normalization::state_count) scale = std::ldexp(scale, static_cast<int>(pop.dimension));
  for (double& v : est) v *= scale;
  return est;
}

// ---------------------------------------------------------------------------
// Annealed importance sampling: the sampler without resampling.

struct AisParticles {
  std::size_t dimension = 0;
  std::vector<BitState> states;     // x_J^i in generation order
  std::vector<double> log_weights;  // sum_j log G_{j-1}(x_{j-1}^i)
  std::uint64_t cost = 0;

  std::size_t size() const noexcept { return states.size(); }
};

/// Particle i uses only stream.child(i): particles are mutually independent
/// and the first k particles of any run are distributed as a k-particle run.
template <AnnealingSchedule Schedule>
AisParticles ais_run(const Schedule& schedule, const SmcConfig& config, const RngStream& stream) {
  config.validate();
  const std::size_t n = config.particles;
  const std::size_t d = schedule.dimension();
  const std::size_t steps = schedule.steps();

  AisParticles out;
  out.dimension = d;
  out.states.resize(n);
  out.log_weights.assign(n, 0.0);
  std::vector<std::uint64_t> evals(n, 0);
  detail::parallel_for(n, config.threads, [&](std::size_t i) {
    auto rng = stream.child(i).engine();
    BitState x{detail::random_bits(rng, d)};
    double lp = schedule.log_density(0, x);
    double lw = 0.0;
    std::uint64_t e = 0;
    for (std::size_t j = 1; j <= steps; ++j) {
      const double g = schedule.log_ratio(j - 1, x);
      ++e;
      lw += g;
      lp += g;
      e += mutate(schedule, j, config.kernel, x, lp, rng);
    }
    out.states[i] = x;
    out.log_weights[i] = lw;
    evals[i] = e;
  });
  for (auto e : evals) out.cost += e;
  return out;
}

/// Self-normalized ratio estimate over the first `subset_size` particles.
template <class F>
std::vector<double> ais_ratio(const AisParticles& particles, F&& f, std::size_t subset_size) {
  if (subset_size == 0 || subset_size > particles.size()) {
    throw ConfigError("ais_ratio: subset size must be in [1, N]");
  }
  const std::span<const double> lw(particles.log_weights.data(), subset_size);
  const auto w = normalize_log_weights(lw);
  std::vector<double> acc;
  for (std::size_t i = 0; i < subset_size; ++i) {
    const auto v = detail::as_vector(f, particles.states[i]);
    if (acc.empty()) acc.assign(v.size(), 0.0);
    for (std::size_t k = 0; k < v.size(); ++k) acc[k] += w[i] * v[k];
  }
  return acc;
}

template <class F>
std::vector<double> ais_ratio(const AisParticles& particles, F&& f) {
  return ais_ratio(particles, std::forward<F>(f), particles.size());
}

/// (1/N) sum_i W^i f(x^i), unbiased for Gamma_J(f).
template <class F>
std::vector<double> ais_unnormalized(const AisParticles& particles, F&& f,
                                     Normalization normalization = Normalization::uniform_probability) {
  std::vector<double> acc;
  const double shift = normalization == Normalization::state_count
                           ? static_cast<double>(particles.dimension) * std::numbers::ln2
                           : 0.0;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const auto v = detail::as_vector(f, particles.states[i]);
    if (acc.empty()) acc.assign(v.size(), 0.0);
    const double w = std::exp(particles.log_weights[i] + shift);
    for (std::size_t k = 0; k < v.size(); ++k) acc[k] += w * v[k];
  }
  for (double& v : acc) v /= static_cast<double>(particles.size());
  return acc;
}

}  // namespace maxent_smc
