// Recover a 4-bit Ising model from its exact first and second moments.

#include <cstdio>

#include "maxent_smc/model.hpp"
#include "maxent_smc/solver.hpp"

using namespace maxent_smc;

int main() {
  const std::size_t d = 4;
  const auto features = FeatureSet::pairwise(d);

  auto rng = RngStream(7).engine();
  ParamVector truth = ParamVector::zeros(features.size());
  for (auto& v : truth.values) v = 2.0 * uniform01(rng) - 1.0;
  const auto m = oracle_moments(truth, features);

  auto config = SolverConfig::defaults_for(d, 10000);
  config.oracle_misfit_every = 1000;
  const auto result = solve_maxent(m, features, ParamVector::zeros(features.size()), config, RngStream(1));

  for (const auto& r : result.trace.records) {
    if (r.misfit) std::printf("n=%-6zu misfit=%.4f\n", r.n, *r.misfit);
  }
  std::printf("%-6s %9s %9s\n", "term", "truth", "fit");
  for (std::size_t j = 0; j < features.size(); ++j) {
    std::printf("%-6s %9.4f %9.4f\n", features.label(j).c_str(), truth[j], result.lambda[j]);
  }
  std::printf("target evaluations: %llu\n", static_cast<unsigned long long>(result.trace.total_cost()));
}
