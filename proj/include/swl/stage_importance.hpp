// Stage importance network: an LSTM over (X_j, A_{j-1}) produces H_j; the
// stage input [H_j, X_j, A_j] is scaled by a raw attention scalar w_j and a
// per-stage linear head maps it to a surrogate immediate reward. The squared
// error between R and the summed surrogate rewards, plus L2 penalties, is
// minimized jointly. Normalized scores are exp(|w_j|) / sum_k exp(|w_k|).

#ifndef SWL_STAGE_IMPORTANCE_HPP
#define SWL_STAGE_IMPORTANCE_HPP

#include <cstdint>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "swl/estimators.hpp"
#include "swl/training.hpp"
#include "swl/trajectories.hpp"

namespace swl {

struct ImportanceArch {
  int input_dim = 0;  // p + 1
  int hidden = 16;

  void validate() const;
};

void to_json(nlohmann::json& j, const ImportanceArch& a);
void from_json(const nlohmann::json& j, ImportanceArch& a);

class ImportanceNet {
 public:
  ImportanceNet() = default;
  ImportanceNet(int T, ImportanceArch arch, std::uint64_t seed);

  [[nodiscard]] int T() const { return static_cast<int>(raw_.size()); }
  [[nodiscard]] const ImportanceArch& arch() const { return arch_; }

  /// Order: Wx, Wh, b (LSTM; gate blocks i, f, o, g), w_1..w_T (1 x 1 each),
  /// V_1..V_T (head columns over [H_j, X_j, A_j]), c (shared offset).
  [[nodiscard]] std::vector<Matrix*> parameters();
  [[nodiscard]] std::vector<const Matrix*> parameters() const;

  [[nodiscard]] std::vector<double> raw_weights() const;
  void set_raw_weights(const std::vector<double>& w);

  /// H_1..H_{stage+1} for every panel row; reads X_1..X_{stage+1} and
  /// A_1..A_stage only. A_0 is 0.
  [[nodiscard]] std::vector<Matrix> hidden_states(const Panel& panel, int stage) const;
  /// Surrogate reward of every stage (n x T), standardized units.
  [[nodiscard]] Matrix stage_rewards(const Panel& panel) const;
  /// Summed surrogate rewards in the units of R.
  [[nodiscard]] Vector predict_total(const Panel& panel) const;

  /// Affine map from R to the standardized training target.
  double target_mean = 0.0;
  double target_scale = 1.0;

  [[nodiscard]] nlohmann::json to_json() const;
  static ImportanceNet from_json(const nlohmann::json& j);

  Matrix Wx, Wh, b;
  std::vector<Matrix> V;
  Matrix c;

 private:
  ImportanceArch arch_;
  std::vector<Matrix> raw_;
};

/// exp(|w_j|) / sum_k exp(|w_k|).
[[nodiscard]] StageWeights normalize_raw_weights(const std::vector<double>& raw);
[[nodiscard]] StageWeights normalize_weights(const ImportanceNet& net);

struct ImportancePenalty {
  double head = 1e-1;  // on w_j and V_j
  double lstm = 1e-1;  // on Wx, Wh, b

  void validate() const;
};

/// Squared-error tape at a fixed number of rows.
class ImportanceLoss {
 public:
  ImportanceLoss(const ImportanceNet& layout, int rows, int p, ImportancePenalty penalty = {});

  /// Mean squared error against `target` (standardized units) plus the
  /// penalty.
  double evaluate(const ImportanceNet& net, const Panel& panel, const Vector& target,
                  std::vector<Matrix>* gradient);
  [[nodiscard]] std::vector<Matrix> leaf_values(const ImportanceNet& net, const Panel& panel,
                                                const Vector& target) const;
  [[nodiscard]] numgrad::Tape& tape() { return tape_; }

 private:
  void assign(const ImportanceNet& net, const Panel& panel, const Vector& target);

  int rows_;
  numgrad::Tape tape_;
  numgrad::Var target_;
  numgrad::Var zero_;
  std::vector<numgrad::Var> covariates_;
  std::vector<numgrad::Var> actions_;
  std::vector<numgrad::Var> params_;
};

struct ImportanceOptions {
  ImportanceArch arch;  // input_dim is filled from the data
  TrainSpec train;
  ImportancePenalty penalty;
  /// Finite-difference check on a 3-subject probe before training; throws
  /// if any relative error reaches 1e-4.
  bool gradient_check = false;
};

void to_json(nlohmann::json& j, const ImportanceOptions& o);
void from_json(const nlohmann::json& j, ImportanceOptions& o);

struct ImportanceFit {
  ImportanceNet net;
  std::vector<double> trace;  // standardized MSE plus penalty
  int iterations = 0;
  bool reached_tolerance = false;
  double mse = 0.0;  // final MSE in the units of R
};

/// Requires T >= 2. Throws DivergenceError on a non-finite loss.
[[nodiscard]] ImportanceFit train_importance(const Dataset& ds, const ImportanceOptions& options);

/// H_j from a trained importance network, optionally followed by X_j (the
/// stage input the network's reward head sees).
class LstmEncoder final : public HistoryEncoder {
 public:
  explicit LstmEncoder(std::shared_ptr<const ImportanceNet> net, bool with_covariates = true);

  [[nodiscard]] int dim() const override {
    return net_->arch().hidden + (with_covariates_ ? net_->arch().input_dim - 1 : 0);
  }
  [[nodiscard]] Matrix encode(const Panel& panel, int stage) const override;
  [[nodiscard]] nlohmann::json to_json() const override;
  [[nodiscard]] const ImportanceNet& net() const { return *net_; }
  [[nodiscard]] bool with_covariates() const { return with_covariates_; }

 private:
  std::shared_ptr<const ImportanceNet> net_;
  bool with_covariates_;
};

/// Rebuilds a ConcatEncoder or LstmEncoder from its to_json() form.
[[nodiscard]] std::shared_ptr<const HistoryEncoder> encoder_from_json(const nlohmann::json& j);

}  // namespace swl

#endif  // SWL_STAGE_IMPORTANCE_HPP
