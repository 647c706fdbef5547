#include <gtest/gtest.h>

#include <cmath>

#include "swl/harness.hpp"
#include "swl/policy.hpp"
#include "swl/simulator.hpp"
#include "testing.hpp"

using namespace swl;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// T = 1, p = 2, randomized actions, d* = sign(x1 - 1), R = A d*.
Dataset planted_threshold(std::uint64_t seed, int n) {
  Rng rng(seed);
  std::vector<Trajectory> trs;
  for (int i = 0; i < n; ++i) {
    Trajectory tr;
    Vector x(2);
    x << normal(rng), normal(rng);
    const int a = bernoulli(rng, 0.5) ? 1 : -1;
    tr.covariates.push_back(x);
    tr.actions.push_back(a);
    tr.propensities.push_back(0.5);
    tr.total_reward = a * (x(0) >= 1.0 ? 1.0 : -1.0);
    trs.push_back(std::move(tr));
  }
  return Dataset(std::move(trs));
}

PolicyTrainOptions quick(PolicyKind kind, int iterations) {
  PolicyTrainOptions o;
  o.kind = kind;
  o.width = 4;
  o.depth = 1;
  o.train.max_iterations = iterations;
  o.train.seed = 5;
  return o;
}

}  // namespace

TEST(Policy, PropensityOfRandomizedAssignment) {
  Rng rng(1);
  const Dataset ds = testutil::random_dataset(rng, 2000, 2, 2);
  const ConcatEncoder enc(2, 2, 1);
  const Matrix fitted = fit_propensity(ds, enc).observed(ds, enc);
  for (int t = 0; t < 2; ++t) {
    EXPECT_LE((fitted.col(t).array() - 0.5).abs().mean(), 0.03) << "stage " << t + 1;
  }
}

TEST(Policy, PropensityOnSimulatorRecoversQ) {
  SimConfig c;
  c.n = 2000;
  c.T = 3;
  c.match_prob = 0.5;
  c.seed = 1;
  const Dataset ds = generate(c).data;
  const ConcatEncoder enc(3, c.p, 1);
  const PropensityModel model = fit_propensity(ds, enc);
  for (int t = 0; t < 3; ++t) {
    EXPECT_NEAR(sig(model.coefficients(t)(0)), 0.5, 0.03) << "stage " << t + 1;
    EXPECT_NEAR(model.prob_treat(t, enc.encode(ds.panel(), t)).mean(), 0.5, 0.03);
  }
}

TEST(Policy, PropensityRecoversLogisticCoefficient) {
  Rng rng(2);
  std::vector<Trajectory> trs;
  for (int i = 0; i < 5000; ++i) {
    Trajectory tr;
    const double x = normal(rng);
    const double p = sig(0.8 * x);
    const int a = bernoulli(rng, p) ? 1 : -1;
    tr.covariates.push_back(Vector::Constant(1, x));
    tr.actions.push_back(a);
    tr.propensities.push_back(a == 1 ? p : 1 - p);
    tr.total_reward = 0.0;
    trs.push_back(std::move(tr));
  }
  const Dataset ds(std::move(trs));
  const ConcatEncoder enc(1, 1, 1);
  const PropensityModel model = fit_propensity(ds, enc);
  EXPECT_NEAR(model.coefficients(0)(1), 0.8, 0.15);
  EXPECT_NEAR(model.coefficients(0)(0), 0.0, 0.15);
  EXPECT_TRUE(model.warnings().empty());
}

TEST(Policy, ConstantActionGivesInterceptOnly) {
  Rng rng(3);
  auto trs = testutil::random_dataset(rng, 50, 2, 2).trajectories();
  for (auto& tr : trs) tr.actions[1] = 1;
  const Dataset ds(trs);
  const ConcatEncoder enc(2, 2, 1);
  const PropensityModel model = fit_propensity(ds, enc);
  ASSERT_EQ(model.warnings().size(), 1u);
  EXPECT_NE(model.warnings()[0].find("intercept-only"), std::string::npos);
  EXPECT_EQ(model.coefficients(1).tail(2), Vector::Zero(2));
  const Vector p = model.prob_treat(1, enc.encode(ds.panel(), 1));
  EXPECT_NEAR(p.maxCoeff(), 1.0 - kPropensityFloor, 1e-12);
  EXPECT_NEAR(p.minCoeff(), 1.0 - kPropensityFloor, 1e-12);
}

TEST(Policy, PropensityModelJsonRoundTrip) {
  Rng rng(4);
  const Dataset ds = testutil::random_dataset(rng, 80, 2, 2);
  const ConcatEncoder enc(2, 2, 1);
  const PropensityModel model = fit_propensity(ds, enc);
  const PropensityModel back = PropensityModel::from_json(model.to_json());
  EXPECT_EQ(back.observed(ds, enc), model.observed(ds, enc));
}

TEST(Policy, ZeroParametersDecidePlusOne) {
  PolicyNet net(3, PolicyArch{PolicyKind::Nonlinear, 2, 3, 2}, 1);
  for (Matrix* m : net.parameters()) m->setZero();
  Rng rng(5);
  const Dataset ds = testutil::random_dataset(rng, 20, 3, 2);
  const PolicyRegime regime(net, std::make_shared<ConcatEncoder>(3, 2, 1));
  const Matrix d = predict(regime, ds);
  EXPECT_EQ(d, Matrix::Ones(20, 3));
}

TEST(Policy, PositiveScalingKeepsDecisions) {
  auto enc = std::make_shared<ConcatEncoder>(3, 2);
  PolicyNet net(3, PolicyArch{PolicyKind::Linear, enc->dim(), 1, 0}, 2);
  Rng rng(6);
  const Dataset ds = testutil::random_dataset(rng, 100, 3, 2);
  const Matrix before = predict(PolicyRegime(net, enc), ds);
  for (Matrix* m : net.parameters()) *m *= 3.7;
  EXPECT_EQ(predict(PolicyRegime(net, enc), ds), before);
}

TEST(Policy, DecisionsUseOnlyThePrefix) {
  Rng rng(7);
  auto trs = testutil::random_dataset(rng, 2, 4, 2).trajectories();
  trs[1] = trs[0];
  trs[1].covariates[2] = -trs[1].covariates[2] + Vector::Constant(2, 1.0);
  trs[1].covariates[3] *= 4.0;
  trs[1].actions[2] = -trs[1].actions[2];
  const Dataset ds(trs);
  auto enc = std::make_shared<ConcatEncoder>(4, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PolicyRegime regime(PolicyNet(4, PolicyArch{PolicyKind::Nonlinear, enc->dim(), 5, 2}, seed), enc);
    const Matrix d = predict(regime, ds);
    EXPECT_EQ(d.row(0).head(2), d.row(1).head(2));
  }
}

TEST(Policy, PolicyNetJsonRoundTrip) {
  const PolicyNet net(2, PolicyArch{PolicyKind::Nonlinear, 3, 4, 2}, 8);
  const PolicyNet back = PolicyNet::from_json(net.to_json());
  const Matrix H = Matrix::Random(5, 3);
  for (int t = 0; t < 2; ++t) EXPECT_EQ(back.score(t, H), net.score(t, H));
}

TEST(Policy, SalEqualsSwlWithUniformWeights) {
  Rng rng(9);
  const Dataset ds = testutil::random_dataset(rng, 40, 3, 2);
  const ConcatEncoder enc(3, 2, 1);
  const PolicyTrainOptions opt = quick(PolicyKind::Nonlinear, 60);
  const PolicyFit sal = train_policy(ds, enc, ds.propensities(), PolicyObjective::sal(), opt);
  const PolicyFit swl =
      train_policy(ds, enc, ds.propensities(), PolicyObjective::swl(StageWeights::uniform(3)), opt);
  EXPECT_EQ(sal.trace, swl.trace);
  EXPECT_EQ(sal.net.to_json().dump(), swl.net.to_json().dump());
}

TEST(Policy, TrainingLeavesWeightsUntouched) {
  Rng rng(10);
  const Dataset ds = testutil::random_dataset(rng, 40, 3, 2);
  const ConcatEncoder enc(3, 2, 1);
  const PolicyObjective objective = PolicyObjective::swl(StageWeights({0.2, 0.5, 0.3}));
  const std::vector<double> before = objective.weights->values();
  (void)train_policy(ds, enc, ds.propensities(), objective, quick(PolicyKind::Linear, 30));
  EXPECT_EQ(objective.weights->values(), before);
}

TEST(Policy, TrainingIsDeterministicAndAscends) {
  Rng rng(11);
  const Dataset ds = testutil::random_dataset(rng, 60, 2, 2);
  const ConcatEncoder enc(2, 2, 1);
  const PolicyTrainOptions opt = quick(PolicyKind::Nonlinear, 200);
  const PolicyFit a = train_policy(ds, enc, ds.propensities(), PolicyObjective::sal(), opt);
  const PolicyFit b = train_policy(ds, enc, ds.propensities(), PolicyObjective::sal(), opt);
  EXPECT_EQ(a.trace, b.trace);
  ASSERT_FALSE(a.trace.empty());
  EXPECT_GE(a.trace.back(), a.trace.front());
}

TEST(Policy, MismatchedWeightsAreRejected) {
  Rng rng(12);
  const Dataset ds = testutil::random_dataset(rng, 10, 3, 2);
  const ConcatEncoder enc(3, 2, 1);
  EXPECT_THROW((void)train_policy(ds, enc, ds.propensities(), PolicyObjective::swl(StageWeights::uniform(2)),
                                  quick(PolicyKind::Linear, 5)),
               ValidationError);
  EXPECT_THROW((void)StageWeights({0.7, 0.7}), ValidationError);
}

TEST(Policy, LambdaRamp) {
  PolicyTrainOptions o;
  o.schedule = LambdaSchedule::Ramp;
  o.train.max_iterations = 11;
  EXPECT_NEAR(scheduled_lambda(o, 0), 1.0, 1e-12);
  EXPECT_NEAR(scheduled_lambda(o, 10), 20.0, 1e-12);
  EXPECT_NEAR(scheduled_lambda(o, 5), std::sqrt(20.0), 1e-12);
  o.schedule = LambdaSchedule::Fixed;
  EXPECT_EQ(scheduled_lambda(o, 7), o.surrogate.lambda);
}

TEST(Policy, SingleStageBruteForce) {
  // four history atoms, one-hot encoded, every (atom, action) cell present
  const double mu_plus[4] = {1.0, -0.5, 0.3, -2.0};
  const double mu_minus[4] = {0.0, 0.5, -0.2, 1.0};
  std::vector<Trajectory> trs;
  for (int h = 0; h < 4; ++h) {
    for (int a : {1, -1}) {
      for (int r = 0; r < 25; ++r) {
        Trajectory tr;
        tr.covariates.push_back(Vector::Unit(4, h));
        tr.actions.push_back(a);
        tr.propensities.push_back(0.5);
        tr.total_reward = a == 1 ? mu_plus[h] : mu_minus[h];
        trs.push_back(std::move(tr));
      }
    }
  }
  const Dataset ds(std::move(trs));
  auto enc = std::make_shared<ConcatEncoder>(1, 4, 1);
  const PolicyFit fit = train_policy(ds, *enc, ds.propensities(), PolicyObjective::sal(),
                                     quick(PolicyKind::Linear, 2000));
  for (int h = 0; h < 4; ++h) {
    const double f = fit.net.score(0, Vector::Unit(4, h).transpose())(0);
    EXPECT_EQ(f >= 0 ? 1 : -1, mu_plus[h] > mu_minus[h] ? 1 : -1) << "atom " << h;
  }
}

TEST(Policy, FoldsPartition) {
  const auto folds = make_folds(10, 5, 3);
  ASSERT_EQ(folds.size(), 5u);
  std::vector<int> seen(10, 0);
  for (const auto& f : folds) {
    EXPECT_EQ(f.size(), 2u);
    for (std::size_t i : f) ++seen[i];
  }
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_THROW((void)make_folds(3, 5, 0), ValidationError);
}

TEST(Policy, SinglePointGrid) {
  Rng rng(13);
  const Dataset ds = testutil::random_dataset(rng, 30, 2, 2);
  const ConcatEncoder enc(2, 2, 1);
  CVSpec cv;
  cv.folds = 3;
  cv.grid = {GridPoint{2e-2, 3, 1, 2.0}};
  const CVResult r = cross_validate(ds, enc, ds.propensities(), PolicyObjective::sal(),
                                    quick(PolicyKind::Linear, 20), cv);
  EXPECT_EQ(r.best, 0u);
  EXPECT_EQ(r.best_point.lambda, 2.0);
  ASSERT_EQ(r.scores.size(), 1u);
  EXPECT_EQ(r.scores[0].size(), 3u);
}

TEST(Policy, CrossValidationPrefersSharperSurrogate) {
  // a near-linear surrogate misplaces the threshold at x1 = 1
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset ds = planted_threshold(seed, 500);
    const ConcatEncoder enc(1, 2, 1);
    CVSpec cv;
    cv.folds = 5;
    cv.seed = seed;
    cv.grid = {GridPoint{1e-2, 1, 1, 0.05}, GridPoint{1e-2, 1, 1, 10.0}};
    PolicyTrainOptions opt = quick(PolicyKind::Linear, 400);
    opt.train.tolerance = 0.0;
    const CVResult r = cross_validate(ds, enc, ds.propensities(), PolicyObjective::sal(), opt, cv);
    if (r.best == 1) ++wins;
  }
  EXPECT_GE(wins, 8);
}

TEST(PolicyTrend, LinearHomogeneousAccuracy) {
  SimConfig c;
  c.n = 1000;
  c.T = 5;
  c.rule_kind = RuleKind::Linear;
  c.rule_sharing = RuleSharing::Homogeneous;
  ExperimentSpec spec;
  spec.grid = {c};
  spec.methods = {Method::SWL};
  spec.replications = 10;
  spec.n_eval = 5000;
  const auto rows = run_experiment(spec);
  double acc = 0.0;
  for (const auto& r : rows) acc += r.matching_accuracy;
  acc /= static_cast<double>(rows.size());
  RecordProperty("mean_accuracy", std::to_string(acc));
  EXPECT_GE(acc, 0.85);
}
