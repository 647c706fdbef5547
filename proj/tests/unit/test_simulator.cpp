#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "swl/simulator.hpp"

using namespace swl;

namespace {

SimConfig config(int n, int T, std::uint64_t seed) {
  SimConfig c;
  c.n = n;
  c.T = T;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Simulator, ConfigValidation) {
  SimConfig c = config(10, 3, 0);
  c.match_prob = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = config(10, 3, 0);
  c.n_important_stages = 4;
  EXPECT_THROW(c.validate(), ValidationError);
  c = config(0, 3, 0);
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Simulator, ConfigJsonRoundTrip) {
  SimConfig c = config(123, 4, 77);
  c.rule_kind = RuleKind::Linear;
  c.rule_sharing = RuleSharing::Homogeneous;
  c.match_prob = 0.7;
  c.n_important_stages = 2;
  const SimConfig back = nlohmann::json(c).get<SimConfig>();
  EXPECT_EQ(back.n, 123);
  EXPECT_EQ(back.T, 4);
  EXPECT_EQ(back.rule_kind, RuleKind::Linear);
  EXPECT_EQ(back.rule_sharing, RuleSharing::Homogeneous);
  EXPECT_EQ(back.match_prob, 0.7);
  EXPECT_EQ(back.n_important_stages, 2);
  EXPECT_EQ(back.seed, 77u);
}

TEST(Simulator, IdenticalConfigIsBitwiseIdentical) {
  const SimConfig c = config(200, 4, 5);
  const Dataset a = generate(c).data;
  const Dataset b = generate(c).data;
  EXPECT_EQ(dataset_to_json(a).dump(), dataset_to_json(b).dump());
  const Dataset other = generate(config(200, 4, 6)).data;
  EXPECT_NE(dataset_to_json(a).dump(), dataset_to_json(other).dump());
}

TEST(Simulator, CovariateVarianceStaysOne) {
  const Simulation s = generate(config(20000, 6, 1));
  for (int t = 0; t < 6; ++t) {
    double ss = 0.0;
    double sum = 0.0;
    long count = 0;
    for (const auto& tr : s.data) {
      for (int k = 0; k < 20; ++k) {
        const double v = tr.covariates[static_cast<std::size_t>(t)](k);
        sum += v;
        ss += v * v;
        ++count;
      }
    }
    const double mean = sum / count;
    EXPECT_NEAR(ss / count - mean * mean, 1.0, 0.03) << "stage " << t + 1;
  }
}

TEST(Simulator, PropensitiesAreTheAssignmentProbabilities) {
  SimConfig c = config(300, 5, 2);
  c.match_prob = 0.7;
  const Simulation s = generate(c);
  const Matrix m = match_indicators(s.data, s.env.regime);
  for (int i = 0; i < s.data.n(); ++i) {
    for (int t = 0; t < 5; ++t) {
      const double pi = s.data[static_cast<std::size_t>(i)].propensities[static_cast<std::size_t>(t)];
      EXPECT_EQ(pi, m(i, t) > 0.5 ? 0.7 : 1.0 - 0.7);
    }
  }
}

TEST(Simulator, ImmediateRewardsSumExactly) {
  const Simulation s = generate(config(100, 7, 3));
  for (const auto& tr : s.data) {
    ASSERT_TRUE(tr.immediate_rewards);
    double total = 0.0;
    for (double r : *tr.immediate_rewards) total += r;
    EXPECT_EQ(total, tr.total_reward);
  }
}

TEST(Simulator, UniformOmegaWithoutImportantStages) {
  const Environment env = make_environment(config(10, 7, 4));
  for (double w : env.reward.omega) EXPECT_EQ(w, 1.0 / 7);
  EXPECT_TRUE(env.reward.important_stages.empty());
}

TEST(Simulator, ImportantStagesDominate) {
  SimConfig c = config(10, 10, 5);
  c.n_important_stages = 2;
  const Environment env = make_environment(c);
  ASSERT_EQ(env.reward.important_stages.size(), 2u);
  EXPECT_NEAR(std::accumulate(env.reward.omega.begin(), env.reward.omega.end(), 0.0), 1.0, 1e-12);
  double min_important = 1.0;
  double max_other = 0.0;
  for (int t = 0; t < 10; ++t) {
    const bool imp = t == env.reward.important_stages[0] || t == env.reward.important_stages[1];
    const double w = env.reward.omega[static_cast<std::size_t>(t)];
    if (imp) {
      min_important = std::min(min_important, w);
    } else {
      max_other = std::max(max_other, w);
    }
  }
  EXPECT_GT(min_important, max_other);
}

TEST(Simulator, RuleStructure) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Environment env = make_environment(config(10, 3, seed));
    for (int t = 0; t < 3; ++t) {
      const StageRule& r = env.regime.rule(t);
      EXPECT_GE(r.terms.size(), 5u);
      EXPECT_LE(r.terms.size(), 20u);
      EXPECT_EQ(r.basis.size(), 20u);
      for (const RuleTerm& term : r.terms) {
        EXPECT_GE(term.interaction.size(), 1u);
        EXPECT_LE(term.interaction.size(), 3u);
        EXPECT_EQ(term.interaction.front(), term.index);
      }
    }
    for (const auto& terms : env.reward.base_terms) {
      EXPECT_GE(terms.size(), 5u);
      EXPECT_LE(terms.size(), 20u);
    }
  }
}

TEST(Simulator, HomogeneousRulesAgree) {
  SimConfig c = config(10, 5, 6);
  c.rule_sharing = RuleSharing::Homogeneous;
  for (RuleKind kind : {RuleKind::Linear, RuleKind::Nonlinear}) {
    c.rule_kind = kind;
    const Environment env = make_environment(c);
    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
      Vector x(20);
      for (int k = 0; k < 20; ++k) x(k) = normal(rng);
      for (int t = 1; t < 5; ++t) EXPECT_EQ(env.regime.score(t, x), env.regime.score(0, x));
    }
  }
}

TEST(Simulator, BasisFunctions) {
  EXPECT_EQ(apply_basis(Basis::Identity, -2.0), -2.0);
  EXPECT_EQ(apply_basis(Basis::Square, -2.0), 4.0);
  EXPECT_EQ(apply_basis(Basis::Cube, -2.0), -8.0);
  EXPECT_DOUBLE_EQ(apply_basis(Basis::Arctan, 1.0), std::atan(1.0));
  EXPECT_EQ(apply_basis(Basis::Sign, 0.0), 1.0);
  EXPECT_EQ(apply_basis(Basis::Sign, -0.1), -1.0);
}

TEST(Simulator, OptimalRolloutIsOne) {
  const Environment env = make_environment(config(10, 5, 7));
  const RolloutResult r = rollout(env.regime, env, 10000, 1);
  EXPECT_NEAR(r.mean_reward, 1.0, 0.05);
  EXPECT_EQ(r.matching_accuracy, 1.0);
}

TEST(Simulator, RandomRolloutIsZero) {
  const Environment env = make_environment(config(10, 5, 8));
  const RandomRegime random(5, 3);
  EXPECT_NEAR(oracle_rollout(random, env, 10000, 2), 0.0, 0.05);
  EXPECT_NEAR(matching_accuracy(random, env, 10000, 2), 0.5, 0.02);
}

TEST(Simulator, ComplementRolloutIsMinusOne) {
  const Environment env = make_environment(config(10, 5, 9));
  const ComplementRegime comp(env.regime);
  EXPECT_NEAR(oracle_rollout(comp, env, 10000, 3), -1.0, 0.05);
  EXPECT_EQ(matching_accuracy(comp, env, 10000, 3), 0.0);
}

TEST(Simulator, FullMatchRateAtHalf) {
  const Environment env = make_environment(config(10, 10, 10));
  const std::int64_t n = 200000;
  const auto hist = behavior_matching_histogram(env, n, 4);
  std::uint64_t total = 0;
  for (auto h : hist) total += h;
  EXPECT_EQ(total, static_cast<std::uint64_t>(n));
  const double p = std::pow(0.5, 10);
  const double rate = static_cast<double>(hist[10]) / n;
  EXPECT_NEAR(rate, p, 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Simulator, HistogramAgreesWithSampledData) {
  const Environment env = make_environment(config(10, 4, 11));
  const Dataset ds = sample_dataset(env, 5000, 12);
  std::vector<std::uint64_t> from_data(5, 0);
  for (int k : matching_counts(ds, env.regime)) ++from_data[static_cast<std::size_t>(k)];
  const auto hist = behavior_matching_histogram(env, 5000, 12);
  EXPECT_EQ(hist, from_data);
}
