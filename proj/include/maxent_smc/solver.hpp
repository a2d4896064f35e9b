#pragma once

// Robbins-Monro iteration lambda <- lambda + delta_n F(lambda) for the
// MaxEnt / maximum-likelihood root Q(m - phi | lambda) = 0, with the drift
// estimated afresh by an SMC sampler at every iteration.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maxent_smc/errors.hpp"
#include "maxent_smc/model.hpp"
#include "maxent_smc/random.hpp"
#include "maxent_smc/smc.hpp"

namespace maxent_smc {

enum class StepKind { harmonic, two_phase };

/// delta_n = scale * offset / (offset + n). The two-phase variant divides by
/// `rescale` after `switch_iteration`; the solver fills `rescale` with the
/// normalizing-constant estimate Gamma^N_J(1 | lambda) taken at the switch.
struct StepSchedule {
  StepKind kind = StepKind::two_phase;
  double scale = 1.0;   // epsilon
  double offset = 1.0;  // n_0
  std::size_t switch_iteration = 0;
  double rescale = 1.0;

  static StepSchedule harmonic(double scale, double offset) {
    return StepSchedule{StepKind::harmonic, scale, offset, 0, 1.0};
  }
  static StepSchedule two_phase(double scale, double offset, std::size_t switch_iteration) {
    return StepSchedule{StepKind::two_phase, scale, offset, switch_iteration, 1.0};
  }
  /// epsilon = 1, n_0 = 5d, switch after 2d iterations.
  static StepSchedule defaults_for(std::size_t d) {
    return two_phase(1.0, 5.0 * static_cast<double>(d), 2 * d);
  }

  bool in_first_phase(std::size_t n) const noexcept {
    return kind == StepKind::two_phase && n <= switch_iteration;
  }

  double step(std::size_t n) const noexcept {
    const double base = scale * offset / (offset + static_cast<double>(n));
    return (kind == StepKind::two_phase && n > switch_iteration) ? base / rescale : base;
  }

  void validate() const {
    if (!(scale > 0.0) || !(offset > 0.0) || !std::isfinite(scale) || !std::isfinite(offset)) {
      throw ConfigError("step schedule needs positive finite scale and offset");
    }
  }
};

struct TraceRecord {
  std::size_t n = 0;
  double delta = 0.0;
  std::vector<double> lambda;  // after the update
  std::vector<double> drift;
  std::optional<double> misfit;  // oracle ||Pi(phi|lambda) - m||_inf, when computed
  std::uint64_t cost = 0;        // target evaluations in this iteration

  double drift_norm() const noexcept {
    double m = 0.0;
    for (double v : drift) m = std::max(m, std::abs(v));
    return m;
  }
};

struct SolverTrace {
  std::vector<TraceRecord> records;
  std::optional<double> rescale_estimate;  // captured at the two-phase switch

  std::uint64_t total_cost() const noexcept {
    std::uint64_t c = 0;
    for (const auto& r : records) c += r.cost;
    return c;
  }
};

struct SolverConfig {
  StepSchedule schedule;
  SmcConfig smc;
  std::size_t iterations = 1000;  // K
  double divergence_bound = 50.0;
  Normalization normalization = Normalization::uniform_probability;
  std::size_t oracle_misfit_every = 0;  // 0 disables oracle misfit tracking
  OracleOptions oracle;
  std::optional<double> early_stop_tolerance;
  std::size_t early_stop_window = 100;

  /// N = 2d, beta = 0.6, d sweeps, two-phase steps with epsilon = 1, n_0 = 5d.
  static SolverConfig defaults_for(std::size_t d, std::size_t iterations) {
    SolverConfig c;
    c.schedule = StepSchedule::defaults_for(d);
    c.smc.particles = 2 * d;
    c.smc.kernel = MutationKernelConfig{KernelKind::metropolis_bitflip, 0.6, d};
    c.iterations = iterations;
    return c;
  }
};

class SolverDivergence : public DivergenceError {
 public:
  SolverDivergence(const std::string& what, std::size_t iteration, SolverTrace trace)
      : DivergenceError(what, iteration), trace_(std::move(trace)) {}
  const SolverTrace& trace() const noexcept { return trace_; }

 private:
  SolverTrace trace_;
};

struct SolveResult {
  ParamVector lambda;
  SolverTrace trace;
  bool early_stopped = false;
};

/// One SMC estimate of the MaxEnt drift at lambda.
struct DriftEstimate {
  std::vector<double> misfit;  // m - eta^N_J(phi), biased but consistent
  double normalizer = 1.0;     // Gamma^N_J(1), per the chosen normalization
  std::uint64_t cost = 0;

  /// Gamma^N_J(m - phi) = Gamma^N_J(1) (m - eta^N_J(phi)); unbiased for Q(m - phi)/2^d.
  std::vector<double> unnormalized() const {
    std::vector<double> out = misfit;
    for (double& v : out) v *= normalizer;
    return out;
  }
};

inline DriftEstimate estimate_drift(const MomentVector& m, const FeatureSet& features, const ParamVector& lambda,
                                    const SmcConfig& smc, const RngStream& stream,
                                    Normalization normalization = Normalization::uniform_probability) {
  const FeatureAnnealing schedule(features, lambda);
  const auto pop = smc_run(schedule, smc, stream);
  const auto eta = estimate_target(pop, [&](BitState x) { return features.evaluate(x); });
  DriftEstimate out;
  out.misfit.resize(eta.size());
  for (std::size_t j = 0; j < eta.size(); ++j) out.misfit[j] = m[j] - eta[j];
  double log_norm = pop.log_normalizer();
  if (normalization == Normalization::state_count) {
    log_norm += static_cast<double>(features.dimension()) * std::numbers::ln2;
  }
  out.normalizer = std::exp(log_norm);
  out.cost = pop.cost;
  return out;
}

inline double oracle_misfit(const MomentVector& m, const FeatureSet& features, const ParamVector& lambda,
                            const OracleOptions& options = {}) {
  const auto model = oracle_moments(lambda, features, options);
  double worst = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) worst = std::max(worst, std::abs(model[j] - m[j]));
  return worst;
}

/// Iteration n draws from stream.child(n). In the first phase of a
/// two-phase schedule the drift is m - eta^N_J(phi); afterwards (and
/// throughout for harmonic steps) it is Gamma^N_J(m - phi | lambda).
inline SolveResult solve_maxent(const MomentVector& m, const FeatureSet& features, const ParamVector& lambda0,
                                SolverConfig config, const RngStream& stream) {
  validate(m, features);
  validate(lambda0, features);
  config.schedule.validate();
  config.smc.validate();
  if (config.iterations < 1) throw ConfigError("solver needs at least one iteration");

  SolveResult result;
  result.lambda = lambda0;
  std::deque<double> window;
  double window_sum = 0.0;

  for (std::size_t n = 1; n <= config.iterations; ++n) {
    const auto est = estimate_drift(m, features, result.lambda, config.smc, stream.child(n), config.normalization);
    TraceRecord rec;
    rec.n = n;
    rec.cost = est.cost;
    rec.drift = config.schedule.in_first_phase(n) ? est.misfit : est.unnormalized();
    if (config.schedule.kind == StepKind::two_phase && n == config.schedule.switch_iteration) {
      config.schedule.rescale = est.normalizer;
      result.trace.rescale_estimate = est.normalizer;
    }
    rec.delta = config.schedule.step(n);
    for (std::size_t j = 0; j < rec.drift.size(); ++j) result.lambda[j] += rec.delta * rec.drift[j];
    rec.lambda = result.lambda.values;
    if (config.oracle_misfit_every > 0 && (n % config.oracle_misfit_every == 0 || n == config.iterations)) {
      rec.misfit = oracle_misfit(m, features, result.lambda, config.oracle);
    }
    const double drift_norm = rec.drift_norm();
    result.trace.records.push_back(std::move(rec));

    const double size = result.lambda.max_abs();
    if (!(size <= config.divergence_bound)) {
      throw SolverDivergence("solver diverged at iteration " + std::to_string(n) + ": ||lambda||_inf = " +
                                 std::to_string(size) + " exceeds " + std::to_string(config.divergence_bound) +
                                 " (infeasible moments or step schedule too aggressive)",
                             n, std::move(result.trace));
    }

    if (config.early_stop_tolerance) {
      window.push_back(drift_norm);
      window_sum += drift_norm;
      if (window.size() > config.early_stop_window) {
        window_sum -= window.front();
        window.pop_front();
      }
      if (window.size() == config.early_stop_window &&
          window_sum / static_cast<double>(window.size()) < *config.early_stop_tolerance) {
        result.early_stopped = true;
        break;
      }
    }
  }
  return result;
}

/// Observed bit strings, all of the same dimension.
struct ObservationSet {
  std::size_t dimension = 0;
  std::vector<BitState> rows;

  std::size_t size() const noexcept { return rows.size(); }
};

/// m_hat = (1/M) sum_i phi(y_i).
inline MomentVector empirical_moments(const ObservationSet& y, const FeatureSet& features) {
  if (y.rows.empty()) throw ConfigError("empirical moments need at least one observation");
  if (y.dimension != features.dimension()) {
    throw ConfigError("observations have dimension " + std::to_string(y.dimension) + " but features expect " +
                      std::to_string(features.dimension()));
  }
  std::vector<double> m(features.size(), 0.0);
  for (const auto& row : y.rows) {
    if (!row.fits(y.dimension)) throw ConfigError("observation has bits beyond the declared dimension");
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += features.evaluate_one(j, row);
  }
  for (double& v : m) v /= static_cast<double>(y.rows.size());
  return MomentVector(std::move(m));
}

/// Indices j with m_j in {0, 1}; the likelihood has no finite maximizer there.
inline std::vector<std::size_t> boundary_moments(const MomentVector& m) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < m.size(); ++j) {
    if (m[j] <= 0.0 || m[j] >= 1.0) out.push_back(j);
  }
  return out;
}

struct MleResult {
  SolveResult solve;
  MomentVector empirical;
  std::vector<std::size_t> boundary;  // warnings
};

inline MleResult solve_mle(const ObservationSet& y, const FeatureSet& features, const ParamVector& lambda0,
                           const SolverConfig& config, const RngStream& stream) {
  MleResult out;
  out.empirical = empirical_moments(y, features);
  out.boundary = boundary_moments(out.empirical);
  out.solve = solve_maxent(out.empirical, features, lambda0, config, stream);
  return out;
}

}  // namespace maxent_smc
