// Reference learners: backward-induction Q-learning with linear outcome
// models, and the full-matching IPWE learner (K-IPWL with phi = 1{k = T}).

#ifndef SWL_BASELINES_HPP
#define SWL_BASELINES_HPP

#include <memory>
#include <string>
#include <vector>

#include "swl/policy.hpp"

namespace swl {

/// Q_j(H, A) = [1, H, A, A*H] . beta_j, fitted from stage T back to 1.
class QModel {
 public:
  QModel() = default;
  QModel(std::vector<Vector> coefficients, std::vector<std::string> warnings = {});

  [[nodiscard]] int T() const { return static_cast<int>(coef_.size()); }
  [[nodiscard]] const Vector& coefficients(int stage) const { return coef_.at(static_cast<std::size_t>(stage)); }
  [[nodiscard]] const std::vector<std::string>& warnings() const { return warnings_; }

  [[nodiscard]] Vector q_values(int stage, const Matrix& histories, int action) const;
  /// Q(H, +1) - Q(H, -1) = 2 (beta_A + H . beta_AH).
  [[nodiscard]] Vector contrast(int stage, const Matrix& histories) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static QModel from_json(const nlohmann::json& j);

 private:
  std::vector<Vector> coef_;
  std::vector<std::string> warnings_;
};

/// Design row [1, h, a, a*h] for every row of `histories`.
[[nodiscard]] Matrix q_design(const Matrix& histories, const Vector& actions);

struct QOptions {
  /// Regress r_j + max_a Q_{j+1} when immediate rewards are recorded;
  /// otherwise R is the terminal outcome.
  bool use_immediate_rewards = true;
};

/// OLS per stage; a rank-deficient design falls back to a small ridge
/// penalty and records a warning.
[[nodiscard]] QModel fit_q_learning(const Dataset& ds, const HistoryEncoder& encoder,
                                    const QOptions& options = {});

/// argmax_a Q_j(H_j, a); ties go to +1.
class QRegime final : public Regime {
 public:
  QRegime(QModel model, std::shared_ptr<const HistoryEncoder> encoder);
  [[nodiscard]] int stages() const override { return model_.T(); }
  [[nodiscard]] std::vector<int> decide(const Panel& panel, int stage) const override;
  [[nodiscard]] const QModel& model() const { return model_; }

 private:
  QModel model_;
  std::shared_ptr<const HistoryEncoder> encoder_;
};

/// train_policy with the degenerate scale phi(k) = 1{k = T}.
[[nodiscard]] PolicyFit fit_full_matching_ipwe(const Dataset& ds, const HistoryEncoder& encoder,
                                               const Matrix& propensities,
                                               const PolicyTrainOptions& options);

}  // namespace swl

#endif  // SWL_BASELINES_HPP
