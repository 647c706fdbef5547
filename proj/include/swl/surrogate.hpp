// Smooth surrogates of the SWL and K-IPWL value functions over a PolicyNet,
// with gradients from a numgrad tape.
//
//   SWL:   (1/n) sum_i c_i sum_j w_j psi(A_ij f_j(H_ij); lambda)
//   KIPWL: (1/n) sum_i c_i sum_k phi(k) psi2(sum_j psi(A_ij f_j(H_ij); lambda) - k; sigma)
//
// where c_i = R_i / prod_j pi_ij.

#ifndef SWL_SURROGATE_HPP
#define SWL_SURROGATE_HPP

#include <vector>

#include "swl/estimators.hpp"
#include "swl/policy_net.hpp"

namespace swl {

/// Encoded inputs of a surrogate objective.
struct SurrogateData {
  std::vector<Matrix> histories;  // T entries, n x d
  Matrix actions;                 // n x T
  Vector weights;                 // c_i

  [[nodiscard]] int n() const { return static_cast<int>(actions.rows()); }
  [[nodiscard]] int T() const { return static_cast<int>(actions.cols()); }
  [[nodiscard]] SurrogateData rows(const std::vector<std::size_t>& indices) const;
};

/// Applied to R before weighting: Shift moves it to R - min R + 1e-3,
/// Center subtracts the sample mean.
enum class RewardTransform { None, Shift, Center };

std::string to_string(RewardTransform t);
RewardTransform parse_reward_transform(const std::string& s);

/// c_i = R'_i / prod_j clip(pi_ij) with R' the transformed reward; with
/// `normalize` c is divided by its mean absolute value.
[[nodiscard]] SurrogateData make_surrogate_data(const Dataset& ds, const HistoryEncoder& encoder,
                                                const Matrix& propensities, RewardTransform transform,
                                                bool normalize);

enum class SurrogateKind { SWL, KIPWL };

struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::SWL;
  std::vector<double> stage_weights;  // SWL
  std::vector<double> scale;          // KIPWL, phi(0..T)
  SurrogateParams params;

  static SurrogateSpec swl(const StageWeights& weights, SurrogateParams params = {});
  static SurrogateSpec kipwl(const MatchScale& scale, SurrogateParams params = {});
};

/// Tape for one objective at a fixed number of rows. Reusable across
/// iterations; leaves are refreshed on every evaluation.
class SurrogateObjective {
 public:
  SurrogateObjective(const PolicyNet& layout, SurrogateSpec spec, int rows);

  /// Objective value at `net`; fills `gradient` (aligned with
  /// net.parameters()) when non-null. `lambda` overrides spec.params.lambda.
  double evaluate(const PolicyNet& net, const SurrogateData& data, double lambda,
                  std::vector<Matrix>* gradient);

  /// Leaf values in declaration order, for finite-difference checks.
  [[nodiscard]] std::vector<Matrix> leaf_values(const PolicyNet& net, const SurrogateData& data,
                                                double lambda) const;
  [[nodiscard]] numgrad::Tape& tape() { return tape_; }
  [[nodiscard]] const SurrogateSpec& spec() const { return spec_; }

 private:
  void assign(const PolicyNet& net, const SurrogateData& data, double lambda);

  SurrogateSpec spec_;
  int rows_;
  numgrad::Tape tape_;
  numgrad::Var lambda_;
  numgrad::Var weights_;
  std::vector<numgrad::Var> histories_;
  std::vector<numgrad::Var> actions_;
  std::vector<numgrad::Var> params_;
};

struct ObjectiveValue {
  double value = 0.0;
  std::vector<Matrix> gradient;  // aligned with PolicyNet::parameters()
};

/// Exact objectives on recorded propensities, unshifted and unnormalized.
[[nodiscard]] ObjectiveValue swl_surrogate_objective(const Dataset& ds, const PolicyNet& net,
                                                     const HistoryEncoder& encoder,
                                                     const StageWeights& weights, double lambda);
[[nodiscard]] ObjectiveValue kipwl_surrogate_objective(const Dataset& ds, const PolicyNet& net,
                                                       const HistoryEncoder& encoder,
                                                       const MatchScale& scale, double lambda,
                                                       double sigma);

}  // namespace swl

#endif  // SWL_SURROGATE_HPP
