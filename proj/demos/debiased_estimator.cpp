// Single-term and multi-term debiased estimates of E[x1] under a random
// 3-bit model, compared with enumeration.

#include <cstdio>

#include "maxent_smc/debias.hpp"
#include "maxent_smc/model.hpp"

using namespace maxent_smc;

int main() {
  const auto features = FeatureSet::pairwise(3);
  auto rng = RngStream(11).engine();
  ParamVector lambda = ParamVector::zeros(features.size());
  for (auto& v : lambda.values) v = 2.0 * uniform01(rng) - 1.0;

  const FeatureAnnealing schedule(features, lambda);
  SmcConfig smc;
  smc.particles = 2;  // overridden per level
  smc.kernel.sweeps = 3;
  const auto plan = LevelPlan::make_default(16, 4, 4);
  auto f = [](BitState x) { return x[0] ? 1.0 : 0.0; };

  const std::size_t draws = 2000;
  double single = 0.0, multi = 0.0;
  std::uint64_t cost = 0;
  const RngStream root(3);
  for (std::size_t r = 0; r < draws; ++r) {
    const auto s = single_term_estimate(f, schedule, smc, plan, root.child(2 * r));
    const auto t = multi_term_estimate(f, schedule, smc, plan, root.child(2 * r + 1));
    single += s.values[0];
    multi += t.values[0];
    cost += s.cost;
  }
  std::printf("exact         %.4f\n", oracle_moments(lambda, features)[0]);
  std::printf("single-term   %.4f\n", single / draws);
  std::printf("multi-term    %.4f\n", multi / draws);
  std::printf("mean cost     %.1f (expected %.1f)\n", static_cast<double>(cost) / draws,
              expected_single_term_cost(plan, schedule.steps(), 3, smc.kernel));
}
