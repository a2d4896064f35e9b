#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "maxent_smc/sgld.hpp"
#include "maxent_smc/solver.hpp"
#include "stats.hpp"

using namespace maxent_smc;

namespace {

ParamVector random_lambda(std::size_t j, std::uint64_t seed) {
  auto rng = RngStream(seed).child(96).engine();
  ParamVector v = ParamVector::zeros(j);
  for (auto& x : v.values) x = 2.0 * uniform01(rng) - 1.0;
  return v;
}

SmcConfig kernel_only() {
  SmcConfig c;
  c.particles = 2;
  return c;
}

// Standard error of a weighted average by batch means over contiguous blocks.
stats::MeanSe batch_means(std::span<const WeightedSample> s, std::size_t j, std::size_t batches = 25) {
  std::vector<double> means;
  const std::size_t size = s.size() / batches;
  for (std::size_t b = 0; b < batches; ++b) {
    means.push_back(weighted_average(s.subspan(b * size, size), [&](const std::vector<double>& l) { return l[j]; }));
  }
  auto out = stats::mean_se(means);
  out.mean = weighted_average(s, [&](const std::vector<double>& l) { return l[j]; });
  return out;
}

}  // namespace

TEST(Prior, Gradients) {
  const ParamVector l(std::vector<double>{1.0, -2.0});
  EXPECT_EQ(Prior::flat().log_density_gradient(l), (std::vector<double>{0.0, 0.0}));
  const auto g = Prior::gaussian({0.5, 0.5}, 2.0).log_density_gradient(l);
  EXPECT_DOUBLE_EQ(g[0], -0.25);
  EXPECT_DOUBLE_EQ(g[1], 1.25);
  EXPECT_THROW(Prior::gaussian({0.0}, 0.0), ConfigError);
}

TEST(Gradient, NoDataIsPriorOnly) {
  const auto f = FeatureSet::pairwise(2);
  const ParamVector l(std::vector<double>{0.3, -0.7, 1.1});
  const PosteriorData none{MomentVector({0.5, 0.25, 0.5}), 0};
  const auto prior = Prior::gaussian({0.0, 0.0, 0.0}, 0.5);
  const auto g = gradient_estimate(l, f, none, prior, LevelPlan::make_default(8), kernel_only(), RngStream(1));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(g[j], -l[j] / 0.5);
}

TEST(Gradient, ZeroMeanAtUniformMle) {
  const auto f = FeatureSet::pairwise(2);
  const PosteriorData data{oracle_moments(ParamVector::zeros(3), f), 100};
  std::vector<std::vector<double>> cols(3);
  for (std::uint64_t r = 0; r < 1000; ++r) {
    const auto g = gradient_estimate(ParamVector::zeros(3), f, data, Prior::flat(), LevelPlan::make_default(8, 4),
                                     kernel_only(), RngStream(2).child(r));
    for (std::size_t j = 0; j < 3; ++j) cols[j].push_back(g[j]);
  }
  for (const auto& c : cols) EXPECT_TRUE(stats::within(stats::mean_se(c), 0.0));
}

TEST(Gradient, ZeroMeanAtMle) {
  const auto f = FeatureSet::pairwise(3);
  const auto l = random_lambda(f.size(), 1);
  const PosteriorData data{oracle_moments(l, f), 50};
  std::vector<std::vector<double>> cols(f.size());
  for (std::uint64_t r = 0; r < 1000; ++r) {
    const auto g = gradient_estimate(l, f, data, Prior::flat(), LevelPlan::make_default(8, 4), kernel_only(),
                                     RngStream(3).child(r));
    for (std::size_t j = 0; j < f.size(); ++j) cols[j].push_back(g[j]);
  }
  for (const auto& c : cols) EXPECT_TRUE(stats::within(stats::mean_se(c), 0.0));
}

TEST(Gradient, MatchesOracleGradient) {
  const auto f = FeatureSet::pairwise(3);
  const PosteriorData data{MomentVector({0.6, 0.3, 0.2, 0.5, 0.25, 0.4}), 10};
  const auto prior = Prior::gaussian(std::vector<double>(6, 0.0), 4.0);
  const auto l = random_lambda(f.size(), 2);
  const auto exact = oracle_gradient(l, f, data, prior);
  std::vector<std::vector<double>> cols(f.size());
  std::uint64_t cost = 0;
  for (std::uint64_t r = 0; r < 2000; ++r) {
    const auto g = gradient_estimate(l, f, data, prior, LevelPlan::make_default(8, 4), kernel_only(),
                                     RngStream(4).child(r), &cost);
    for (std::size_t j = 0; j < f.size(); ++j) cols[j].push_back(g[j]);
  }
  EXPECT_GT(cost, 0U);
  for (std::size_t j = 0; j < f.size(); ++j) EXPECT_TRUE(stats::within(stats::mean_se(cols[j]), exact[j])) << j;
}

TEST(ChainConfig, StepSchedule) {
  ChainConfig c;
  c.initial_step = 0.4;
  EXPECT_NEAR(c.step(8), 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(c.step(1), 0.4);
  c.initial_step = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunChain, FrozenDynamics) {
  ChainConfig c;
  c.steps = 100;
  c.noise_scale = 0.0;
  const ParamVector l0(std::vector<double>{0.1, -0.2});
  GradientFn zero = [](const ParamVector& l, const RngStream&) { return std::vector<double>(l.size(), 0.0); };
  const auto s = run_chain(l0, zero, c, RngStream(1));
  ASSERT_EQ(s.size(), 100U);
  for (std::size_t n = 0; n < s.size(); ++n) {
    EXPECT_EQ(s[n].lambda, l0.values);
    EXPECT_EQ(s[n].n, n + 1);
    EXPECT_DOUBLE_EQ(s[n].weight, c.step(n + 1));
  }
}

TEST(RunChain, DeterministicGivenSeed) {
  const auto f = FeatureSet::pairwise(2);
  const PosteriorData data{MomentVector({0.6, 0.3, 0.4}), 100};
  ChainConfig c;
  c.steps = 200;
  const auto a = run_chain(ParamVector::zeros(3), f, data, Prior::flat(), LevelPlan::make_default(8), kernel_only(), c, RngStream(5));
  const auto b = run_chain(ParamVector::zeros(3), f, data, Prior::flat(), LevelPlan::make_default(8), kernel_only(), c, RngStream(5));
  for (std::size_t n = 0; n < a.size(); ++n) EXPECT_EQ(a[n].lambda, b[n].lambda);
}

TEST(RunChain, DivergenceGuard) {
  ChainConfig c;
  c.steps = 1000;
  c.initial_step = 1.0;
  GradientFn push = [](const ParamVector& l, const RngStream&) { return std::vector<double>(l.size(), 100.0); };
  try {
    run_chain(ParamVector::zeros(2), push, c, RngStream(1));
    FAIL() << "expected divergence";
  } catch (const ChainDivergence& e) {
    EXPECT_EQ(e.samples().size(), e.iteration());
  }
}

// Langevin on a Gaussian prior alone: weighted mean near mu, weighted variance near sigma^2.
TEST(RunChain, PriorOnlyChainMatchesGaussian) {
  const std::vector<double> mu{0.5, -1.0, 2.0};
  const double var = 1.0;
  ChainConfig c;
  c.steps = 200000;
  c.initial_step = 1.0;
  const auto s = run_chain(ParamVector(mu), exact_gradient(FeatureSet::pairwise(2), PosteriorData{MomentVector({0.5, 0.25, 0.5}), 0},
                                                            Prior::gaussian(mu, var)),
                           c, RngStream(6));
  const auto kept = after_burn_in(s, 0.5);
  for (std::size_t j = 0; j < 3; ++j) {
    const auto m = batch_means(kept, j);
    EXPECT_TRUE(stats::within(m, mu[j])) << j;
    const double v = weighted_average(kept, [&](const std::vector<double>& l) { return (l[j] - m.mean) * (l[j] - m.mean); });
    EXPECT_NEAR(v, var, 0.15 * var) << j;
  }
}

// SGLD with the exact gradient against an independent random-walk Metropolis chain on the same posterior.
TEST(RunChain, ExactGradientChainMatchesMetropolisReference) {
  const auto f = FeatureSet::pairwise(2);
  const ParamVector truth(std::vector<double>{0.5, -1.0, 0.25});
  const std::size_t M = 200;
  const OracleSampler sampler(truth, f);
  auto rng = RngStream(7).engine();
  ObservationSet y{2, {}};
  for (std::size_t i = 0; i < M; ++i) y.rows.push_back(sampler(rng));
  const PosteriorData data{empirical_moments(y, f), M};

  auto log_post = [&](const std::vector<double>& l) {
    double dot = 0.0;
    for (std::size_t j = 0; j < 3; ++j) dot += l[j] * data.empirical[j];
    return static_cast<double>(M) * (dot - oracle_log_partition(ParamVector(l), f));
  };
  auto quad = [](const std::vector<double>& l) { return l[0] * l[0] + l[1] * l[1] + l[2] * l[2]; };

  double ref_sum = 0.0;
  std::size_t ref_count = 0;
  {
    auto g = RngStream(8).engine();
    std::vector<double> l(3, 0.0);
    double lp = log_post(l);
    for (std::size_t n = 0; n < 400000; ++n) {
      std::vector<double> prop = l;
      for (double& v : prop) v += 0.15 * standard_normal(g);
      const double lq = log_post(prop);
      if (std::log(uniform_open_low(g)) < lq - lp) {
        l = prop;
        lp = lq;
      }
      if (n >= 50000) {
        ref_sum += quad(l);
        ++ref_count;
      }
    }
  }
  const double reference = ref_sum / static_cast<double>(ref_count);

  ChainConfig c;
  c.steps = 100000;
  c.initial_step = 0.02;
  const auto s = run_chain(ParamVector::zeros(3), exact_gradient(f, data, Prior::flat()), c, RngStream(9));
  const double sgld = weighted_average(after_burn_in(s, 0.5), quad);
  EXPECT_NEAR(sgld, reference, 0.1 * reference);
}

TEST(WeightedAverage, Examples) {
  std::vector<WeightedSample> s{{1, {2.0}, 1.0}, {2, {6.0}, 3.0}};
  EXPECT_DOUBLE_EQ(weighted_average(s, [](const std::vector<double>& l) { return l[0]; }), (2.0 + 18.0) / 4.0);
  EXPECT_DOUBLE_EQ(weighted_average(s, [](const std::vector<double>&) { return 1.0; }), 1.0);
  std::vector<WeightedSample> eq{{1, {1.0}, 0.5}, {2, {2.0}, 0.5}, {3, {6.0}, 0.5}};
  EXPECT_DOUBLE_EQ(weighted_average(eq, [](const std::vector<double>& l) { return l[0]; }), 3.0);
}

TEST(WeightedQuantile, StepFunction) {
  std::vector<WeightedSample> s{{1, {1.0}, 1.0}, {2, {2.0}, 1.0}, {3, {3.0}, 2.0}};
  EXPECT_EQ(weighted_quantile(s, 0, 0.25), 1.0);
  EXPECT_EQ(weighted_quantile(s, 0, 0.5), 2.0);
  EXPECT_EQ(weighted_quantile(s, 0, 0.51), 3.0);
}

TEST(AfterBurnIn, DropsLeadingFraction) {
  std::vector<WeightedSample> s(10);
  EXPECT_EQ(after_burn_in(s, 0.5).size(), 5U);
  EXPECT_EQ(after_burn_in(s, 0.0).size(), 10U);
  EXPECT_THROW(after_burn_in(s, 1.0), ConfigError);
}

TEST(PosteriorSummary, HistogramsAndMoments) {
  std::vector<WeightedSample> s;
  auto rng = RngStream(1).engine();
  for (std::size_t n = 1; n <= 2000; ++n) {
    s.push_back({n, {standard_normal(rng), 1.0 + 0.5 * standard_normal(rng), 0.0}, 1.0 / n});
  }
  SummaryOptions o;
  o.bins = 10;
  o.coordinates = {0, 1};
  const auto sum = posterior_summary(s, o, RngStream(2));
  EXPECT_EQ(sum.kept, 1000U);
  ASSERT_EQ(sum.marginals.size(), 2U);
  ASSERT_EQ(sum.pairwise.size(), 1U);
  std::size_t total = 0;
  for (auto c : sum.marginals[0].counts) total += c;
  EXPECT_EQ(total, 1000U);
  std::size_t total2 = 0;
  for (const auto& row : sum.pairwise[0].counts) {
    for (auto c : row) total2 += c;
  }
  EXPECT_EQ(total2, 1000U);
  EXPECT_NEAR(sum.mean[1], 1.0, 0.1);
  EXPECT_NEAR(sum.standard_deviation(1), 0.5, 0.1);
  EXPECT_EQ(sum.covariance[0][1], sum.covariance[1][0]);
  EXPECT_LT(sum.intervals[0].first, sum.intervals[0].second);
  o.coordinates = {5};
  EXPECT_THROW(posterior_summary(s, o, RngStream(2)), ConfigError);
}

TEST(GelmanRubin, AgreeingChainsNearOne) {
  std::vector<std::vector<WeightedSample>> chains(4);
  for (std::size_t c = 0; c < 4; ++c) {
    auto rng = RngStream(c).engine();
    for (std::size_t n = 1; n <= 4000; ++n) chains[c].push_back({n, {standard_normal(rng)}, 1.0});
  }
  EXPECT_NEAR(gelman_rubin(chains, 0), 1.0, 0.02);
  for (auto& s : chains[0]) s.lambda[0] += 5.0;
  EXPECT_GT(gelman_rubin(chains, 0), 1.5);
}
