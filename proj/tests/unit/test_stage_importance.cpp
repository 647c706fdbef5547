#include <gtest/gtest.h>

#include <cmath>

#include "swl/simulator.hpp"
#include "swl/stage_importance.hpp"
#include "testing.hpp"

using namespace swl;

namespace {

ImportanceNet small_net(int T, int p, std::uint64_t seed) {
  ImportanceArch arch;
  arch.input_dim = p + 1;
  arch.hidden = 4;
  return ImportanceNet(T, arch, seed);
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(StageImportance, NormalizeExamples) {
  auto w = normalize_raw_weights({0.0, 0.0}).values();
  EXPECT_NEAR(w[0], 0.5, 1e-12);
  EXPECT_NEAR(w[1], 0.5, 1e-12);
  w = normalize_raw_weights({std::log(2.0), 0.0}).values();
  EXPECT_NEAR(w[0], 2.0 / 3, 1e-12);
  EXPECT_NEAR(w[1], 1.0 / 3, 1e-12);
  w = normalize_raw_weights({-1.7, 1.7}).values();
  EXPECT_NEAR(w[0], 0.5, 1e-12);
  EXPECT_NEAR(w[1], 0.5, 1e-12);
}

TEST(StageImportance, NormalizedWeightsOnSimplex) {
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> raw(6);
    for (double& r : raw) r = 3.0 * normal(rng);
    const auto w = normalize_raw_weights(raw).values();
    double sum = 0.0;
    for (double v : w) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(StageImportance, ZeroInputMatchesScalarCell) {
  const ImportanceNet net = small_net(2, 3, 2);
  std::vector<Trajectory> trs(1);
  for (int t = 0; t < 2; ++t) {
    trs[0].covariates.push_back(Vector::Zero(3));
    trs[0].actions.push_back(1);
    trs[0].propensities.push_back(0.5);
  }
  const Dataset ds(trs);
  const auto H = net.hidden_states(ds.panel(), 0);
  ASSERT_EQ(H.size(), 1u);
  const int h = 4;
  // zero input and zero state leave only the bias; gates [i|f|o|g]
  for (int k = 0; k < h; ++k) {
    const double i = sig(net.b(0, k));
    const double o = sig(net.b(0, 2 * h + k));
    const double g = std::tanh(net.b(0, 3 * h + k));
    EXPECT_NEAR(H[0](0, k), o * std::tanh(i * g), 1e-14);
  }
}

TEST(StageImportance, HiddenStatesAreCausal) {
  const ImportanceNet net = small_net(4, 2, 3);
  Rng rng(4);
  const Dataset ds = testutil::random_dataset(rng, 10, 4, 2);
  auto trs = ds.trajectories();
  for (auto& tr : trs) {
    tr.covariates[2] = -tr.covariates[2];
    tr.covariates[3].setConstant(5.0);
    tr.actions[1] = -tr.actions[1];
    tr.actions[2] = -tr.actions[2];
  }
  const Dataset changed(trs);
  const auto a = net.hidden_states(ds.panel(), 3);
  const auto b = net.hidden_states(changed.panel(), 3);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a[1], b[1]);
  EXPECT_GT((a[2] - b[2]).cwiseAbs().maxCoeff(), 0.0);
}

TEST(StageImportance, FirstActionReachesSecondState) {
  const ImportanceNet net = small_net(2, 2, 5);
  Rng rng(6);
  const Dataset ds = testutil::random_dataset(rng, 5, 2, 2);
  auto trs = ds.trajectories();
  for (auto& tr : trs) tr.actions[0] = -tr.actions[0];
  const Dataset flipped(trs);
  const auto a = net.hidden_states(ds.panel(), 1);
  const auto b = net.hidden_states(flipped.panel(), 1);
  EXPECT_EQ(a[0], b[0]);
  for (int i = 0; i < 5; ++i) EXPECT_GT((a[1].row(i) - b[1].row(i)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(StageImportance, LossGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const ImportanceNet net = small_net(3, 2, 10 + seed);
    Rng rng(20 + seed);
    const Dataset ds = testutil::random_dataset(rng, 3, 3, 2);
    ImportanceLoss loss(net, 3, 2);
    const auto leaves = loss.leaf_values(net, ds.panel(), ds.rewards());
    const auto report = numgrad::finite_difference_check(loss.tape(), leaves, 1e-4);
    EXPECT_LT(report.max_rel_error, 1e-4);
  }
}

TEST(StageImportance, ConstantRewardIsFitExactly) {
  Rng rng(7);
  auto trs = testutil::random_dataset(rng, 200, 3, 3).trajectories();
  for (auto& tr : trs) tr.total_reward = 2.5;
  const Dataset ds(trs);
  ImportanceOptions opt;
  opt.train.max_iterations = 300;
  opt.train.seed = 1;
  const ImportanceFit fit = train_importance(ds, opt);
  EXPECT_LE(fit.mse, 1e-3);
}

TEST(StageImportance, FitReachesNoiseFloor) {
  SimConfig c;
  c.n = 1000;
  c.T = 3;
  c.seed = 8;
  c.rule_kind = RuleKind::Linear;
  const Simulation sim = generate(c);
  ImportanceOptions opt;
  opt.train.seed = 2;
  const ImportanceFit fit = train_importance(sim.data, opt);
  // unit-variance noise on each stage reward
  const double noise_variance = c.T * sim.env.reward.noise_sd * sim.env.reward.noise_sd;
  EXPECT_LT(fit.mse, 1.5 * noise_variance);
}

TEST(StageImportance, TrainingIsDeterministic) {
  Rng rng(9);
  const Dataset ds = testutil::random_dataset(rng, 60, 3, 2);
  ImportanceOptions opt;
  opt.train.max_iterations = 50;
  opt.train.seed = 3;
  const ImportanceFit a = train_importance(ds, opt);
  const ImportanceFit b = train_importance(ds, opt);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.net.raw_weights(), b.net.raw_weights());
}

TEST(StageImportance, SingleStageIsRejected) {
  Rng rng(10);
  const Dataset ds = testutil::random_dataset(rng, 20, 1, 2);
  EXPECT_THROW((void)train_importance(ds, ImportanceOptions{}), ValidationError);
}

TEST(StageImportance, NetJsonRoundTrip) {
  ImportanceNet net = small_net(3, 2, 11);
  net.target_mean = 0.3;
  net.target_scale = 1.7;
  const ImportanceNet back = ImportanceNet::from_json(net.to_json());
  Rng rng(12);
  const Dataset ds = testutil::random_dataset(rng, 8, 3, 2);
  EXPECT_EQ(back.predict_total(ds.panel()), net.predict_total(ds.panel()));
  EXPECT_EQ(back.raw_weights(), net.raw_weights());
}

TEST(StageImportance, LstmEncoderLayout) {
  auto net = std::make_shared<const ImportanceNet>(small_net(3, 2, 13));
  Rng rng(14);
  const Dataset ds = testutil::random_dataset(rng, 6, 3, 2);
  const Panel panel = ds.panel();
  const LstmEncoder with(net);
  const LstmEncoder without(net, false);
  EXPECT_EQ(with.dim(), 6);
  EXPECT_EQ(without.dim(), 4);
  const Matrix a = with.encode(panel, 1);
  const Matrix b = without.encode(panel, 1);
  EXPECT_EQ(a.leftCols(4), b);
  EXPECT_EQ(a.rightCols(2), panel.covariates[1]);
  EXPECT_EQ(b, net->hidden_states(panel, 1)[1]);
  const auto back = encoder_from_json(without.to_json());
  EXPECT_EQ(back->dim(), 4);
  EXPECT_EQ(back->encode(panel, 2), without.encode(panel, 2));
}
