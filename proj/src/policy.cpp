#include "swl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "swl/random.hpp"

namespace swl {

// ---------------------------------------------------------------- propensity

PropensityModel::PropensityModel(std::vector<Vector> coefficients, std::vector<std::string> warnings)
    : coef_(std::move(coefficients)), warnings_(std::move(warnings)) {}

Vector PropensityModel::prob_treat(int stage, const Matrix& histories) const {
  const Vector& b = coefficients(stage);
  if (histories.cols() + 1 != b.size()) {
    throw ShapeError("propensity model expects " + std::to_string(b.size() - 1) +
                     " history columns, got " + std::to_string(histories.cols()));
  }
  const Vector eta = (histories * b.tail(b.size() - 1)).array() + b(0);
  return eta.unaryExpr([](double v) {
    const double p = 1.0 / (1.0 + std::exp(-std::clamp(v, -numgrad::kExpClamp, numgrad::kExpClamp)));
    return std::clamp(p, kPropensityFloor, 1.0 - kPropensityFloor);
  });
}

Matrix PropensityModel::observed(const Dataset& ds, const HistoryEncoder& encoder) const {
  if (T() != ds.T()) throw ValidationError("propensity model and dataset disagree on T");
  const Panel panel = ds.panel();
  Matrix out(ds.n(), ds.T());
  for (int j = 0; j < ds.T(); ++j) {
    const Vector p1 = prob_treat(j, encoder.encode(panel, j));
    for (int i = 0; i < ds.n(); ++i) out(i, j) = panel.actions(i, j) > 0 ? p1(i) : 1.0 - p1(i);
  }
  return out;
}

nlohmann::json PropensityModel::to_json() const {
  nlohmann::json stages = nlohmann::json::array();
  for (const Vector& b : coef_) stages.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  return {{"coefficients", stages}, {"warnings", warnings_}};
}

PropensityModel PropensityModel::from_json(const nlohmann::json& j) {
  std::vector<Vector> coef;
  for (const auto& s : j.at("coefficients")) {
    const auto v = s.get<std::vector<double>>();
    coef.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  return PropensityModel(std::move(coef), j.value("warnings", std::vector<std::string>{}));
}

namespace {

struct LogisticFit {
  Vector beta;
  bool ok = false;
};

// Newton-Raphson on the (optionally ridge-penalized) log-likelihood; the
// intercept in column 0 is never penalized.
LogisticFit irls(const Matrix& X, const Vector& y, double ridge) {
  const Eigen::Index k = X.cols();
  LogisticFit fit;
  fit.beta = Vector::Zero(k);
  Vector penalty = Vector::Constant(k, ridge);
  penalty(0) = 0.0;
  for (int it = 0; it < 100; ++it) {
    const Vector eta = X * fit.beta;
    const Vector mu = eta.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-std::clamp(v, -500.0, 500.0))); });
    const Vector w = mu.cwiseProduct((Vector::Ones(mu.size()) - mu));
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    H.diagonal() += penalty;
    const Vector g = X.transpose() * (y - mu) - penalty.cwiseProduct(fit.beta);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return fit;
    const Vector step = ldlt.solve(g);
    if (!step.allFinite()) return fit;
    fit.beta += step;
    if (fit.beta.cwiseAbs().maxCoeff() > 30.0) return fit;  // separating direction
    if (step.cwiseAbs().maxCoeff() < 1e-10) {
      fit.ok = true;
      return fit;
    }
  }
  return fit;
}

}  // namespace

PropensityModel fit_propensity(const Dataset& ds, const HistoryEncoder& encoder) {
  const Panel panel = ds.panel();
  std::vector<Vector> coef;
  std::vector<std::string> warnings;
  for (int j = 0; j < ds.T(); ++j) {
    const Matrix H = encoder.encode(panel, j);
    const Vector y = (panel.actions.col(j).array() > 0).cast<double>();
    Vector beta = Vector::Zero(H.cols() + 1);
    const double rate = y.mean();
    const std::string tag = "stage " + std::to_string(j + 1) + ": ";
    if (rate <= 0.0 || rate >= 1.0) {
      const double r = std::clamp(rate, kPropensityFloor, 1.0 - kPropensityFloor);
      beta(0) = std::log(r / (1.0 - r));
      warnings.push_back(tag + "single observed action, intercept-only model");
      coef.push_back(std::move(beta));
      continue;
    }
    // Constant columns (zero padding, for instance) carry no information.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < H.cols(); ++c) {
      const double mean = H.col(c).mean();
      if ((H.col(c).array() - mean).square().sum() > 1e-12 * H.rows()) keep.push_back(c);
    }
    Matrix X(H.rows(), static_cast<Eigen::Index>(keep.size()) + 1);
    X.col(0).setOnes();
    for (std::size_t c = 0; c < keep.size(); ++c) X.col(static_cast<Eigen::Index>(c) + 1) = H.col(keep[c]);

    LogisticFit fit = irls(X, y, 0.0);
    if (!fit.ok) {
      fit = irls(X, y, 1.0);
      warnings.push_back(tag + "separation or singular design, ridge-stabilized fit");
      if (!fit.ok) throw ValidationError(tag + "propensity fit did not converge");
    }
    beta(0) = fit.beta(0);
    for (std::size_t c = 0; c < keep.size(); ++c) beta(keep[c] + 1) = fit.beta(static_cast<Eigen::Index>(c) + 1);
    coef.push_back(std::move(beta));
  }
  return PropensityModel(std::move(coef), std::move(warnings));
}

// ---------------------------------------------------------------- training

std::string to_string(PolicyObjectiveKind k) {
  switch (k) {
    case PolicyObjectiveKind::SAL: return "SAL";
    case PolicyObjectiveKind::SWL: return "SWL";
    case PolicyObjectiveKind::KIPWL: return "KIPWL";
  }
  return "?";
}

PolicyObjectiveKind parse_objective_kind(const std::string& s) {
  if (s == "SAL") return PolicyObjectiveKind::SAL;
  if (s == "SWL") return PolicyObjectiveKind::SWL;
  if (s == "KIPWL") return PolicyObjectiveKind::KIPWL;
  throw ValidationError("unknown objective '" + s + "' (expected SAL, SWL or KIPWL)");
}

void PolicyTrainOptions::validate() const {
  train.validate();
  surrogate.validate();
  if (kind == PolicyKind::Nonlinear && (width < 1 || depth < 1)) {
    throw ValidationError("nonlinear policy needs width >= 1 and depth >= 1");
  }
}

void to_json(nlohmann::json& j, const PolicyTrainOptions& o) {
  j = {{"kind", to_string(o.kind)},
       {"width", o.width},
       {"depth", o.depth},
       {"train", o.train},
       {"lambda", o.surrogate.lambda},
       {"sigma", o.surrogate.sigma},
       {"schedule", o.schedule == LambdaSchedule::Fixed ? "fixed" : "ramp"},
       {"reward_transform", to_string(o.reward_transform)}};
}

void from_json(const nlohmann::json& j, PolicyTrainOptions& o) {
  if (j.contains("kind")) o.kind = parse_policy_kind(j.at("kind").get<std::string>());
  o.width = j.value("width", o.width);
  o.depth = j.value("depth", o.depth);
  if (j.contains("train")) j.at("train").get_to(o.train);
  o.surrogate.lambda = j.value("lambda", o.surrogate.lambda);
  o.surrogate.sigma = j.value("sigma", o.surrogate.sigma);
  if (j.contains("schedule")) {
    const auto s = j.at("schedule").get<std::string>();
    if (s == "fixed") {
      o.schedule = LambdaSchedule::Fixed;
    } else if (s == "ramp") {
      o.schedule = LambdaSchedule::Ramp;
    } else {
      throw ValidationError("unknown lambda schedule '" + s + "' (expected fixed or ramp)");
    }
  }
  if (j.contains("reward_transform")) {
    o.reward_transform = parse_reward_transform(j.at("reward_transform").get<std::string>());
  }
}

double scheduled_lambda(const PolicyTrainOptions& options, int iteration) {
  if (options.schedule == LambdaSchedule::Fixed) return options.surrogate.lambda;
  const int last = std::max(1, options.train.max_iterations - 1);
  const double frac = std::clamp(static_cast<double>(iteration) / last, 0.0, 1.0);
  return std::pow(20.0, frac);
}

namespace {

SurrogateSpec surrogate_spec(const PolicyObjective& objective, int T, SurrogateParams params) {
  switch (objective.kind) {
    case PolicyObjectiveKind::SAL:
      return SurrogateSpec::swl(StageWeights::uniform(T), params);
    case PolicyObjectiveKind::SWL:
      if (!objective.weights) throw ValidationError("SWL objective needs stage weights");
      if (objective.weights->T() != T) throw ValidationError("stage weights do not match T");
      return SurrogateSpec::swl(*objective.weights, params);
    case PolicyObjectiveKind::KIPWL:
      if (!objective.scale) throw ValidationError("KIPWL objective needs a match scale");
      if (objective.scale->T() != T) throw ValidationError("match scale does not match T");
      return SurrogateSpec::kipwl(*objective.scale, params);
  }
  throw ValidationError("unknown objective");
}

void negate(std::vector<Matrix>& g) {
  for (Matrix& m : g) m = -m;
}

}  // namespace

PolicyFit train_policy(const Dataset& ds, const HistoryEncoder& encoder, const Matrix& propensities,
                       const PolicyObjective& objective, const PolicyTrainOptions& options) {
  options.validate();
  const int n = ds.n();
  const int T = ds.T();
  PolicyArch arch{options.kind, encoder.dim(), options.width, options.depth};
  PolicyFit fit;
  fit.net = PolicyNet(T, arch, derive_seed(options.train.seed, 1));

  const SurrogateData data = make_surrogate_data(ds, encoder, propensities, options.reward_transform, true);
  const int batch = options.train.batch_size == 0 || options.train.batch_size >= n ? n : options.train.batch_size;
  SurrogateObjective obj(fit.net, surrogate_spec(objective, T, options.surrogate), batch);
  numgrad::Adam adam(fit.net.parameters(), {.learning_rate = options.train.learning_rate});

  // Ascent: the optimizer minimizes the negated objective.
  const LossFn loss = [&](const std::vector<std::size_t>* rows, int it, std::vector<Matrix>* grad) {
    const double lambda = scheduled_lambda(options, it);
    const double v = rows ? obj.evaluate(fit.net, data.rows(*rows), lambda, grad)
                          : obj.evaluate(fit.net, data, lambda, grad);
    if (grad) negate(*grad);
    return -v;
  };
  OptimizeResult r = run_adam(n, options.train, adam, loss,
                              options.schedule == LambdaSchedule::Fixed, "policy");
  for (double& v : r.trace) v = -v;
  fit.trace = std::move(r.trace);
  fit.iterations = r.iterations;
  fit.reached_tolerance = r.reached_tolerance;
  return fit;
}

// ---------------------------------------------------------- cross-validation

void CVSpec::validate() const {
  if (folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  if (grid.empty()) throw ValidationError("cross-validation grid is empty");
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  if (n < static_cast<std::size_t>(folds)) {
    throw ValidationError("cannot split " + std::to_string(n) + " subjects into " +
                          std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
  const std::size_t base = n / static_cast<std::size_t>(folds);
  const std::size_t extra = n % static_cast<std::size_t>(folds);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < out.size(); ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    out[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                  order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(out[f].begin(), out[f].end());
    pos += size;
  }
  return out;
}

namespace {

Matrix rows_of(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

}  // namespace

CVResult cross_validate(const Dataset& ds, const HistoryEncoder& encoder, const Matrix& propensities,
                        const PolicyObjective& objective, const PolicyTrainOptions& base,
                        const CVSpec& cv) {
  cv.validate();
  const auto folds = make_folds(static_cast<std::size_t>(ds.n()), cv.folds, cv.seed);
  const std::shared_ptr<const HistoryEncoder> enc(std::shared_ptr<void>(), &encoder);
  const StageWeights fallback_weights =
      objective.weights ? *objective.weights : StageWeights::uniform(ds.T());

  CVResult result;
  for (const GridPoint& g : cv.grid) {
    PolicyTrainOptions opt = base;
    opt.train.learning_rate = g.learning_rate;
    opt.width = g.width;
    opt.depth = g.depth;
    opt.surrogate.lambda = g.lambda;
    std::vector<FoldScore> scores;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<std::size_t> train;
      for (std::size_t o = 0; o < folds.size(); ++o) {
        if (o != f) train.insert(train.end(), folds[o].begin(), folds[o].end());
      }
      std::sort(train.begin(), train.end());
      const Dataset tr = ds.subset(train);
      const Dataset te = ds.subset(folds[f]);
      const Matrix te_props = rows_of(propensities, folds[f]);
      PolicyFit fit = train_policy(tr, encoder, rows_of(propensities, train), objective, opt);
      const PolicyRegime regime(std::move(fit.net), enc);
      const WeightedMatches wm = weighted_matches(te, regime, te_props);
      FoldScore s;
      try {
        s.value = empirical_value(wm);
      } catch (const NoOverlapError&) {
        s.value = swl_value(wm, fallback_weights);
        s.fallback = true;
      }
      scores.push_back(s);
    }
    double mean = 0.0;
    for (const FoldScore& s : scores) mean += s.value;
    result.mean_scores.push_back(mean / static_cast<double>(scores.size()));
    result.scores.push_back(std::move(scores));
  }

  auto size_of = [&](const GridPoint& g) {
    PolicyArch a{base.kind, encoder.dim(), g.width, g.depth};
    return a.parameter_count();
  };
  std::size_t best = 0;
  for (std::size_t k = 1; k < cv.grid.size(); ++k) {
    const double a = result.mean_scores[k];
    const double b = result.mean_scores[best];
    const bool better = a > b + 1e-12 ||
                        (std::abs(a - b) <= 1e-12 &&
                         (size_of(cv.grid[k]) < size_of(cv.grid[best]) ||
                          (size_of(cv.grid[k]) == size_of(cv.grid[best]) &&
                           cv.grid[k].lambda < cv.grid[best].lambda)));
    if (better) best = k;
  }
  result.best = best;
  result.best_point = cv.grid[best];
  return result;
}

}  // namespace swl
