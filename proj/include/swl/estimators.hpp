// Inverse-probability-weighted value estimators over matching counts, and
// their smooth surrogates.

#ifndef SWL_ESTIMATORS_HPP
#define SWL_ESTIMATORS_HPP

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swl/trajectories.hpp"

namespace swl {

/// Propensities are clipped to [kPropensityFloor, 1 - kPropensityFloor]
/// before division.
inline constexpr double kPropensityFloor = 1e-3;

/// Scale phi over matching counts 0..T.
class MatchScale {
 public:
  /// phi(k) = 1{k = k0}.
  static MatchScale degenerate(int T, int k0);
  /// phi(k) = k / T.
  static MatchScale linear(int T);
  static MatchScale custom(std::vector<double> weights);
  /// Normalized histogram of matching counts, with `pseudo_count` added to
  /// every level before normalizing.
  static MatchScale empirical(const std::vector<int>& counts, int T, double pseudo_count = 1.0);

  [[nodiscard]] int T() const { return static_cast<int>(phi_.size()) - 1; }
  [[nodiscard]] double operator()(int k) const { return phi_.at(static_cast<std::size_t>(k)); }
  [[nodiscard]] const std::vector<double>& weights() const { return phi_; }

 private:
  explicit MatchScale(std::vector<double> phi);
  std::vector<double> phi_;
};

/// Stage importance scores on the simplex.
class StageWeights {
 public:
  /// Throws ValidationError if any weight leaves [0, 1] or the sum differs
  /// from 1 by more than 1e-9.
  explicit StageWeights(std::vector<double> omega);
  static StageWeights uniform(int T);

  [[nodiscard]] int T() const { return static_cast<int>(omega_.size()); }
  [[nodiscard]] double operator[](int j) const { return omega_[static_cast<std::size_t>(j)]; }
  [[nodiscard]] const std::vector<double>& values() const { return omega_; }

 private:
  std::vector<double> omega_;
};

struct SurrogateParams {
  double lambda = 5.0;  // logistic sharpness
  double sigma = 1.0;   // Gaussian width

  void validate() const;
};

/// Per-subject quantities shared by every estimator.
struct WeightedMatches {
  Vector rewards;          // R_i
  Vector inverse_weights;  // 1 / prod_j pi_ij (clipped)
  Matrix matches;          // n x T indicators
};

[[nodiscard]] WeightedMatches weighted_matches(const Dataset& ds, const Regime& regime);
/// Same, with an explicit n x T matrix of propensities of the observed actions.
[[nodiscard]] WeightedMatches weighted_matches(const Dataset& ds, const Regime& regime,
                                               const Matrix& propensities);

/// 1 / prod_j clip(pi_ij) for every subject. Throws on pi <= 0.
[[nodiscard]] Vector inverse_propensity_products(const Matrix& propensities);

[[nodiscard]] double ipwe_value(const WeightedMatches& wm);
[[nodiscard]] double k_ipwe_value(const WeightedMatches& wm, int k);
[[nodiscard]] double general_value(const WeightedMatches& wm, const MatchScale& scale);
[[nodiscard]] double sal_value(const WeightedMatches& wm);
[[nodiscard]] double swl_value(const WeightedMatches& wm, const StageWeights& weights);
/// Ratio of IPW-weighted reward to IPW-weighted full-match indicator.
/// Throws NoOverlapError when no subject is fully matched.
[[nodiscard]] double empirical_value(const WeightedMatches& wm);

[[nodiscard]] double ipwe_value(const Dataset& ds, const Regime& regime);
[[nodiscard]] double k_ipwe_value(const Dataset& ds, const Regime& regime, int k);
[[nodiscard]] double general_value(const Dataset& ds, const Regime& regime, const MatchScale& scale);
[[nodiscard]] double sal_value(const Dataset& ds, const Regime& regime);
[[nodiscard]] double swl_value(const Dataset& ds, const Regime& regime, const StageWeights& weights);
[[nodiscard]] double empirical_value(const Dataset& ds, const Regime& regime,
                                     const Matrix& fitted_propensities);

/// psi(x; lambda) = 1 / (1 + exp(-lambda x)), exponent clamped.
[[nodiscard]] double logistic_surrogate(double x, double lambda);
/// psi_2(x; sigma) = exp(-x^2 / sigma).
[[nodiscard]] double gaussian_surrogate(double x, double sigma);

/// R <- R - min(R) + epsilon.
[[nodiscard]] Vector shift_nonnegative(const Vector& rewards, double epsilon = 1e-3);

}  // namespace swl

#endif  // SWL_ESTIMATORS_HPP
