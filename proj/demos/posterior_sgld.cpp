// SGLD posterior over a 2-bit model from 10^4 synthetic observations.

#include <cstdio>

#include "maxent_smc/model.hpp"
#include "maxent_smc/sgld.hpp"
#include "maxent_smc/solver.hpp"

using namespace maxent_smc;

int main() {
  const auto features = FeatureSet::pairwise(2);
  const ParamVector truth(std::vector<double>{0.5, -1.0, 0.25});
  const std::size_t M = 10000;

  const OracleSampler sampler(truth, features);
  auto rng = RngStream(5).engine();
  ObservationSet y{2, {}};
  for (std::size_t i = 0; i < M; ++i) y.rows.push_back(sampler(rng));
  const PosteriorData data{empirical_moments(y, features), M};

  ChainConfig chain;
  chain.initial_step = 1.0 / static_cast<double>(M);
  chain.steps = 20000;
  SmcConfig smc;
  smc.particles = 2;
  const auto samples = run_chain(ParamVector::zeros(features.size()), features, data, Prior::flat(),
                                 LevelPlan::make_default(16, 4, 4), smc, chain, RngStream(9));
  const auto summary = posterior_summary(samples, SummaryOptions{}, RngStream(10));

  std::printf("%-6s %8s %8s %8s %19s\n", "term", "truth", "mean", "sd", "99% interval");
  for (std::size_t j = 0; j < features.size(); ++j) {
    std::printf("%-6s %8.3f %8.3f %8.3f   [%7.3f, %7.3f]\n", features.label(j).c_str(), truth[j],
                summary.mean[j], summary.standard_deviation(j), summary.intervals[j].first,
                summary.intervals[j].second);
  }
}
