#include "swl/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace swl {

MatchScale::MatchScale(std::vector<double> phi) : phi_(std::move(phi)) {
  if (phi_.empty()) throw ValidationError("match scale needs at least one level");
  bool any = false;
  for (double v : phi_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError("match scale weights must be finite and nonnegative");
    }
    any = any || v > 0.0;
  }
  if (!any) throw ValidationError("match scale weights are all zero");
}

MatchScale MatchScale::degenerate(int T, int k0) {
  if (k0 < 0 || k0 > T) throw ValidationError("degenerate scale level out of range");
  std::vector<double> phi(static_cast<std::size_t>(T) + 1, 0.0);
  phi[static_cast<std::size_t>(k0)] = 1.0;
  return MatchScale(std::move(phi));
}

MatchScale MatchScale::linear(int T) {
  if (T < 1) throw ValidationError("linear scale needs T >= 1");
  std::vector<double> phi(static_cast<std::size_t>(T) + 1);
  for (int k = 0; k <= T; ++k) phi[static_cast<std::size_t>(k)] = static_cast<double>(k) / T;
  return MatchScale(std::move(phi));
}

MatchScale MatchScale::custom(std::vector<double> weights) { return MatchScale(std::move(weights)); }

MatchScale MatchScale::empirical(const std::vector<int>& counts, int T, double pseudo_count) {
  std::vector<double> phi(static_cast<std::size_t>(T) + 1, pseudo_count);
  for (int k : counts) {
    if (k < 0 || k > T) throw ValidationError("matching count out of range");
    phi[static_cast<std::size_t>(k)] += 1.0;
  }
  const double total = std::accumulate(phi.begin(), phi.end(), 0.0);
  if (!(total > 0.0)) throw ValidationError("empirical scale has no mass");
  for (double& v : phi) v /= total;
  return MatchScale(std::move(phi));
}

StageWeights::StageWeights(std::vector<double> omega) : omega_(std::move(omega)) {
  if (omega_.empty()) throw ValidationError("stage weights are empty");
  double total = 0.0;
  for (double w : omega_) {
    if (!(w >= -1e-12 && w <= 1.0 + 1e-12)) {
      throw ValidationError("stage weight outside [0, 1]");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("stage weights sum to " + std::to_string(total) + ", expected 1");
  }
}

StageWeights StageWeights::uniform(int T) {
  return StageWeights(std::vector<double>(static_cast<std::size_t>(T), 1.0 / T));
}

void SurrogateParams::validate() const {
  if (!(lambda > 0.0)) throw ValidationError("surrogate lambda must be positive");
  if (!(sigma > 0.0)) throw ValidationError("surrogate sigma must be positive");
}

Vector inverse_propensity_products(const Matrix& propensities) {
  Vector w(propensities.rows());
  for (Eigen::Index i = 0; i < propensities.rows(); ++i) {
    double prod = 1.0;
    for (Eigen::Index j = 0; j < propensities.cols(); ++j) {
      const double pi = propensities(i, j);
      if (!(pi > 0.0)) {
        throw ValidationError("propensity " + std::to_string(pi) + " for subject " +
                              std::to_string(i) + " at stage " + std::to_string(j + 1) +
                              " is not positive");
      }
      prod *= std::clamp(pi, kPropensityFloor, 1.0 - kPropensityFloor);
    }
    w(i) = 1.0 / prod;
  }
  return w;
}

WeightedMatches weighted_matches(const Dataset& ds, const Regime& regime,
                                 const Matrix& propensities) {
  if (propensities.rows() != ds.n() || propensities.cols() != ds.T()) {
    throw ShapeError("propensity matrix must be n x T");
  }
  WeightedMatches wm;
  wm.rewards = ds.rewards();
  wm.inverse_weights = inverse_propensity_products(propensities);
  wm.matches = match_indicators(ds, regime);
  return wm;
}

WeightedMatches weighted_matches(const Dataset& ds, const Regime& regime) {
  return weighted_matches(ds, regime, ds.propensities());
}

namespace {

// Subjects are reduced in index order so results are bit-reproducible.
template <typename Weight>
double weighted_mean(const WeightedMatches& wm, Weight&& weight) {
  const Eigen::Index n = wm.rewards.size();
  if (n == 0) throw ValidationError("estimator needs at least one subject");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    total += wm.rewards(i) * weight(i) * wm.inverse_weights(i);
  }
  return total / static_cast<double>(n);
}

int count_of(const WeightedMatches& wm, Eigen::Index i) {
  return static_cast<int>(std::lround(wm.matches.row(i).sum()));
}

}  // namespace

double ipwe_value(const WeightedMatches& wm) {
  const int T = static_cast<int>(wm.matches.cols());
  return weighted_mean(wm, [&](Eigen::Index i) { return count_of(wm, i) == T ? 1.0 : 0.0; });
}

double k_ipwe_value(const WeightedMatches& wm, int k) {
  const int T = static_cast<int>(wm.matches.cols());
  if (k < 0 || k > T) {
    throw ValidationError("k = " + std::to_string(k) + " outside [0, " + std::to_string(T) + "]");
  }
  return weighted_mean(wm, [&](Eigen::Index i) { return count_of(wm, i) == k ? 1.0 : 0.0; });
}

double general_value(const WeightedMatches& wm, const MatchScale& scale) {
  if (scale.T() != wm.matches.cols()) {
    throw ValidationError("match scale covers T=" + std::to_string(scale.T()) +
                          " but trajectories have T=" + std::to_string(wm.matches.cols()));
  }
  return weighted_mean(wm, [&](Eigen::Index i) { return scale(count_of(wm, i)); });
}

double sal_value(const WeightedMatches& wm) {
  const double T = static_cast<double>(wm.matches.cols());
  return weighted_mean(wm, [&](Eigen::Index i) { return count_of(wm, i) / T; });
}

double swl_value(const WeightedMatches& wm, const StageWeights& weights) {
  if (weights.T() != wm.matches.cols()) {
    throw ValidationError("stage weights have T=" + std::to_string(weights.T()) +
                          " but trajectories have T=" + std::to_string(wm.matches.cols()));
  }
  return weighted_mean(wm, [&](Eigen::Index i) {
    double s = 0.0;
    for (int j = 0; j < weights.T(); ++j) s += weights[j] * wm.matches(i, j);
    return s;
  });
}

double empirical_value(const WeightedMatches& wm) {
  const int T = static_cast<int>(wm.matches.cols());
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index i = 0; i < wm.rewards.size(); ++i) {
    if (count_of(wm, i) != T) continue;
    num += wm.rewards(i) * wm.inverse_weights(i);
    den += wm.inverse_weights(i);
  }
  if (!(den > 0.0)) {
    throw NoOverlapError("no subject is fully matched to the evaluated regime; "
                         "the empirical value is undefined");
  }
  return num / den;
}

double ipwe_value(const Dataset& ds, const Regime& regime) {
  return ipwe_value(weighted_matches(ds, regime));
}

double k_ipwe_value(const Dataset& ds, const Regime& regime, int k) {
  return k_ipwe_value(weighted_matches(ds, regime), k);
}

double general_value(const Dataset& ds, const Regime& regime, const MatchScale& scale) {
  return general_value(weighted_matches(ds, regime), scale);
}

double sal_value(const Dataset& ds, const Regime& regime) {
  return sal_value(weighted_matches(ds, regime));
}

double swl_value(const Dataset& ds, const Regime& regime, const StageWeights& weights) {
  return swl_value(weighted_matches(ds, regime), weights);
}

double empirical_value(const Dataset& ds, const Regime& regime, const Matrix& fitted_propensities) {
  return empirical_value(weighted_matches(ds, regime, fitted_propensities));
}

double logistic_surrogate(double x, double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("logistic surrogate needs lambda > 0");
  const double z = std::clamp(-lambda * x, -numgrad::kExpClamp, numgrad::kExpClamp);
  return 1.0 / (1.0 + std::exp(z));
}

double gaussian_surrogate(double x, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian surrogate needs sigma > 0");
  return std::exp(-x * x / sigma);
}

Vector shift_nonnegative(const Vector& rewards, double epsilon) {
  if (rewards.size() == 0) return rewards;
  return rewards.array() - rewards.minCoeff() + epsilon;
}

}  // namespace swl
