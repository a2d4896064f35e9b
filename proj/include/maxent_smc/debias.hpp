#pragma once

// Randomized-level debiasing of the AIS ratio estimator.
//
// Level l runs one AIS realization with N_l = N_0 * growth^l particles and
// forms Delta_l = ratio(all N_l) - ratio(first N_l / growth); Delta_0 is the
// plain N_0-particle ratio. Then sum_{l<=L} E Delta_l = E ratio(N_L), which
// tends to eta_J(f), and a random level turns the telescoping sum into an
// unbiased (up to truncation at L_max) signed estimator.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "maxent_smc/errors.hpp"
#include "maxent_smc/random.hpp"
#include "maxent_smc/smc.hpp"

namespace maxent_smc {

struct LevelPlan {
  std::size_t base_particles = 16;  // N_0
  std::size_t growth = 4;           // N_{l+1} / N_l
  std::size_t max_level = 6;        // L_max
  std::vector<double> single_term;      // p_l, sums to one
  std::vector<double> multi_term;       // tilde p_l, sums to one
  std::vector<double> multi_term_tail;  // P(L >= l) under tilde p

  std::size_t levels() const noexcept { return max_level + 1; }

  std::size_t particles(std::size_t level) const {
    std::size_t n = base_particles;
    for (std::size_t l = 0; l < level; ++l) n *= growth;
    return n;
  }

  /// p_l proportional to N_l^{-1} (l+2) log(l+2), the same shape for tilde p.
  /// The shift by two keeps levels 0 and 1 reachable.
  static LevelPlan make_default(std::size_t base_particles, std::size_t max_level = 6, std::size_t growth = 4) {
    LevelPlan plan;
    plan.base_particles = base_particles;
    plan.growth = growth;
    plan.max_level = max_level;
    std::vector<double> w(max_level + 1);
    for (std::size_t l = 0; l <= max_level; ++l) {
      const double s = static_cast<double>(l) + 2.0;
      w[l] = s * std::log(s) / static_cast<double>(plan.particles(l));
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= total;
    plan.single_term = w;
    plan.set_multi_term(w);
    plan.validate();
    return plan;
  }

  /// Explicit probabilities; `multi` defaults to `single` when empty.
  static LevelPlan with_probabilities(std::size_t base_particles, std::size_t growth, std::vector<double> single,
                                      std::vector<double> multi = {}) {
    if (single.empty()) throw ConfigError("level plan needs at least one level");
    LevelPlan plan;
    plan.base_particles = base_particles;
    plan.growth = growth;
    plan.max_level = single.size() - 1;
    plan.single_term = std::move(single);
    plan.set_multi_term(multi.empty() ? plan.single_term : std::move(multi));
    plan.validate();
    return plan;
  }

  void set_multi_term(std::vector<double> p) {
    multi_term = std::move(p);
    multi_term_tail.assign(multi_term.size(), 0.0);
    double acc = 0.0;
    for (std::size_t l = multi_term.size(); l-- > 0;) {
      acc += multi_term[l];
      multi_term_tail[l] = acc;
    }
    // P(L >= 0) is one by construction; pin it against rounding.
    if (!multi_term_tail.empty()) multi_term_tail[0] = 1.0;
  }

  void validate() const {
    if (base_particles < 2) throw ConfigError("level plan needs N_0 >= 2");
    if (growth < 2) throw ConfigError("level plan growth must be at least 2");
    auto check = [&](const std::vector<double>& p, const char* name) {
      if (p.size() != levels()) throw ConfigError(std::string(name) + " has wrong length");
      double s = 0.0;
      for (double v : p) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) throw ConfigError(std::string(name) + " must sum to one");
    };
    check(single_term, "single-term level probabilities");
    check(multi_term, "multi-term level probabilities");
  }
};

/// Draws a level from a probability vector by inverse CDF.
inline std::size_t draw_level(const std::vector<double>& p, SplitMix64& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t l = 0; l < p.size(); ++l) {
    acc += p[l];
    if (u < acc) return l;
  }
  return p.size() - 1;
}

struct Increment {
  std::size_t level = 0;
  std::vector<double> values;  // Delta_l
  std::uint64_t cost = 0;      // target evaluations
};

/// Delta_l from one AIS realization with N_l particles. The subtracted
/// estimate reuses the first N_l / growth particles of the same run.
template <AnnealingSchedule Schedule, class F>
Increment coupled_increment(std::size_t level, const Schedule& schedule, const SmcConfig& config, F&& f,
                            const LevelPlan& plan, const RngStream& stream) {
  if (level > plan.max_level + 1) throw ConfigError("level above the plan's range");
  SmcConfig run = config;
  run.particles = plan.particles(level);
  const auto particles = ais_run(schedule, run, stream);
  Increment inc;
  inc.level = level;
  inc.cost = particles.cost;
  inc.values = ais_ratio(particles, f, run.particles);
  if (level > 0) {
    const auto coarse = ais_ratio(particles, f, run.particles / plan.growth);
    for (std::size_t k = 0; k < inc.values.size(); ++k) inc.values[k] -= coarse[k];
  }
  return inc;
}

struct DebiasedEstimate {
  std::vector<double> values;
  std::size_t level = 0;  // the drawn L
  std::uint64_t cost = 0;
};

/// Delta_L / p_L with L ~ p. One level is shared by all coordinates of f.
template <AnnealingSchedule Schedule, class F>
DebiasedEstimate single_term_estimate(F&& f, const Schedule& schedule, const SmcConfig& config,
                                      const LevelPlan& plan, const RngStream& stream) {
  auto rng = stream.child(0).engine();
  const std::size_t level = draw_level(plan.single_term, rng);
  auto inc = coupled_increment(level, schedule, config, f, plan, stream.child(1));
  for (double& v : inc.values) v /= plan.single_term[level];
  return {std::move(inc.values), level, inc.cost};
}

/// sum_{l<=L} Delta_l / P(L >= l) with L ~ tilde p; each Delta_l from its own run.
template <AnnealingSchedule Schedule, class F>
DebiasedEstimate multi_term_estimate(F&& f, const Schedule& schedule, const SmcConfig& config,
                                     const LevelPlan& plan, const RngStream& stream) {
  auto rng = stream.child(0).engine();
  const std::size_t level = draw_level(plan.multi_term, rng);
  DebiasedEstimate out;
  out.level = level;
  for (std::size_t l = 0; l <= level; ++l) {
    const auto inc = coupled_increment(l, schedule, config, f, plan, stream.child(1 + l));
    if (out.values.empty()) out.values.assign(inc.values.size(), 0.0);
    for (std::size_t k = 0; k < inc.values.size(); ++k) out.values[k] += inc.values[k] / plan.multi_term_tail[l];
    out.cost += inc.cost;
  }
  return out;
}

/// C(Delta_l): deterministic cost of one level-l increment.
inline std::uint64_t increment_cost(std::size_t level, const LevelPlan& plan, std::size_t steps, std::size_t d,
                                    const MutationKernelConfig& kernel) {
  return static_cast<std::uint64_t>(plan.particles(level)) * per_particle_cost(steps, d, kernel);
}

/// sum_l p_l C(Delta_l).
inline double expected_single_term_cost(const LevelPlan& plan, std::size_t steps, std::size_t d,
                                        const MutationKernelConfig& kernel) {
  double c = 0.0;
  for (std::size_t l = 0; l <= plan.max_level; ++l) {
    c += plan.single_term[l] * static_cast<double>(increment_cost(l, plan, steps, d, kernel));
  }
  return c;
}

/// sum_l P(L >= l) C(Delta_l) for the multi-term estimator.
inline double expected_multi_term_cost(const LevelPlan& plan, std::size_t steps, std::size_t d,
                                       const MutationKernelConfig& kernel) {
  double c = 0.0;
  for (std::size_t l = 0; l <= plan.max_level; ++l) {
    c += plan.multi_term_tail[l] * static_cast<double>(increment_cost(l, plan, steps, d, kernel));
  }
  return c;
}

struct LevelStatistics {
  std::size_t level = 0;
  std::size_t particles = 0;
  std::vector<double> mean;      // E Delta_l
  std::vector<double> variance;  // Var Delta_l
  std::vector<double> second_moment;
  double mean_cost = 0.0;
};

struct LevelProfile {
  std::vector<LevelStatistics> levels;  // 0..L_max+1
  std::vector<double> variance_sum;     // sum_{l<=L_max} E Delta_l^2 / p_l
  std::vector<double> truncation_remainder;  // |sum_{l>L_max} E Delta_l|, estimated
  std::vector<double> truncation_standard_error;
};

/// Replicated increments at every level 0..L_max+1.
///
/// The truncation remainder extrapolates E Delta_{L_max+1} geometrically:
/// the ratio estimator's bias is O(1/N), so E Delta_l shrinks by `growth`
/// per level and the tail sums to growth / (growth - 1) times its first term.
template <AnnealingSchedule Schedule, class F>
LevelProfile profile_levels(const Schedule& schedule, const SmcConfig& config, F&& f, const LevelPlan& plan,
                            std::size_t replicates, const RngStream& stream) {
  if (replicates < 2) throw ConfigError("level profile needs at least 2 replicates");
  LevelProfile profile;
  for (std::size_t l = 0; l <= plan.max_level + 1; ++l) {
    LevelStatistics st;
    st.level = l;
    st.particles = plan.particles(l);
    std::vector<double> sum, sum_sq;
    double cost = 0.0;
    for (std::size_t r = 0; r < replicates; ++r) {
      const auto inc = coupled_increment(l, schedule, config, f, plan, stream.child(l).child(r));
      if (sum.empty()) {
        sum.assign(inc.values.size(), 0.0);
        sum_sq.assign(inc.values.size(), 0.0);
      }
      for (std::size_t k = 0; k < inc.values.size(); ++k) {
        sum[k] += inc.values[k];
        sum_sq[k] += inc.values[k] * inc.values[k];
      }
      cost += static_cast<double>(inc.cost);
    }
    const double r = static_cast<double>(replicates);
    for (std::size_t k = 0; k < sum.size(); ++k) {
      const double mean = sum[k] / r;
      st.mean.push_back(mean);
      st.second_moment.push_back(sum_sq[k] / r);
      st.variance.push_back(std::max(0.0, (sum_sq[k] - r * mean * mean) / (r - 1.0)));
    }
    st.mean_cost = cost / r;
    profile.levels.push_back(std::move(st));
  }
  const std::size_t k_dim = profile.levels.front().mean.size();
  profile.variance_sum.assign(k_dim, 0.0);
  for (std::size_t l = 0; l <= plan.max_level; ++l) {
    for (std::size_t k = 0; k < k_dim; ++k) {
      profile.variance_sum[k] += profile.levels[l].second_moment[k] / plan.single_term[l];
    }
  }
  const double factor = static_cast<double>(plan.growth) / static_cast<double>(plan.growth - 1);
  const auto& tail = profile.levels.back();
  for (std::size_t k = 0; k < k_dim; ++k) {
    profile.truncation_remainder.push_back(factor * std::abs(tail.mean[k]));
    profile.truncation_standard_error.push_back(factor *
                                                std::sqrt(tail.variance[k] / static_cast<double>(replicates)));
  }
  return profile;
}

}  // namespace maxent_smc
