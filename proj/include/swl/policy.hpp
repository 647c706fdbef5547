// Regime learning by surrogate value maximization, per-stage propensity
// models, and d-fold cross-validation.

#ifndef SWL_POLICY_HPP
#define SWL_POLICY_HPP

#include <optional>
#include <string>
#include <vector>

#include "swl/surrogate.hpp"
#include "swl/training.hpp"

namespace swl {

/// Per-stage logistic regression of 1{A_j = +1} on (1, H_j).
class PropensityModel {
 public:
  PropensityModel() = default;
  explicit PropensityModel(std::vector<Vector> coefficients, std::vector<std::string> warnings = {});

  [[nodiscard]] int T() const { return static_cast<int>(coef_.size()); }
  [[nodiscard]] const Vector& coefficients(int stage) const { return coef_.at(static_cast<std::size_t>(stage)); }
  [[nodiscard]] const std::vector<std::string>& warnings() const { return warnings_; }

  /// P(A_j = +1 | H_j), clipped to [1e-3, 1 - 1e-3].
  [[nodiscard]] Vector prob_treat(int stage, const Matrix& histories) const;
  /// n x T fitted probabilities of the observed actions.
  [[nodiscard]] Matrix observed(const Dataset& ds, const HistoryEncoder& encoder) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static PropensityModel from_json(const nlohmann::json& j);

 private:
  std::vector<Vector> coef_;
  std::vector<std::string> warnings_;
};

/// Maximum-likelihood fit by iteratively reweighted least squares. A stage
/// with a single observed action gets an intercept-only model; separation
/// or a singular design falls back to a ridge-stabilized fit and records a
/// warning.
[[nodiscard]] PropensityModel fit_propensity(const Dataset& ds, const HistoryEncoder& encoder);

enum class PolicyObjectiveKind { SAL, SWL, KIPWL };

std::string to_string(PolicyObjectiveKind k);
PolicyObjectiveKind parse_objective_kind(const std::string& s);

struct PolicyObjective {
  PolicyObjectiveKind kind = PolicyObjectiveKind::SAL;
  std::optional<StageWeights> weights;  // SWL
  std::optional<MatchScale> scale;      // KIPWL

  static PolicyObjective sal() { return {}; }
  static PolicyObjective swl(StageWeights w) { return {PolicyObjectiveKind::SWL, std::move(w), {}}; }
  static PolicyObjective kipwl(MatchScale s) { return {PolicyObjectiveKind::KIPWL, {}, std::move(s)}; }
};

enum class LambdaSchedule { Fixed, Ramp };

struct PolicyTrainOptions {
  PolicyKind kind = PolicyKind::Nonlinear;
  int width = 32;
  int depth = 2;
  TrainSpec train;
  SurrogateParams surrogate;
  /// Ramp grows lambda geometrically from 1 to 20 over max_iterations.
  LambdaSchedule schedule = LambdaSchedule::Fixed;
  RewardTransform reward_transform = RewardTransform::Center;

  void validate() const;
};

void to_json(nlohmann::json& j, const PolicyTrainOptions& o);
void from_json(const nlohmann::json& j, PolicyTrainOptions& o);

struct PolicyFit {
  PolicyNet net;
  std::vector<double> trace;  // objective (normalized weights) per iteration or epoch
  int iterations = 0;
  bool reached_tolerance = false;
};

/// Gradient ascent with Adam on the surrogate of `objective`. `propensities`
/// is the n x T matrix of observed-action probabilities (recorded or
/// fitted). Throws DivergenceError on a non-finite objective.
[[nodiscard]] PolicyFit train_policy(const Dataset& ds, const HistoryEncoder& encoder,
                                     const Matrix& propensities, const PolicyObjective& objective,
                                     const PolicyTrainOptions& options);

/// lambda at iteration t of a schedule.
[[nodiscard]] double scheduled_lambda(const PolicyTrainOptions& options, int iteration);

struct GridPoint {
  double learning_rate = 1e-2;
  int width = 32;
  int depth = 2;
  double lambda = 5.0;
};

struct CVSpec {
  int folds = 5;
  std::vector<GridPoint> grid;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FoldScore {
  double value = 0.0;
  /// No held-out subject fully matched; value is the SWL estimate instead.
  bool fallback = false;
};

struct CVResult {
  std::size_t best = 0;
  GridPoint best_point;
  std::vector<std::vector<FoldScore>> scores;  // [grid point][fold]
  std::vector<double> mean_scores;
};

/// Shuffled partition of 0..n-1 into `folds` nearly equal parts.
[[nodiscard]] std::vector<std::vector<std::size_t>> make_folds(std::size_t n, int folds,
                                                               std::uint64_t seed);

/// Scores each grid point by its mean held-out empirical value. Ties go to
/// the smaller model, then the smaller lambda.
[[nodiscard]] CVResult cross_validate(const Dataset& ds, const HistoryEncoder& encoder,
                                      const Matrix& propensities, const PolicyObjective& objective,
                                      const PolicyTrainOptions& base, const CVSpec& cv);

}  // namespace swl

#endif  // SWL_POLICY_HPP
