// Per-stage decision networks f_1..f_T over encoded histories, and the
// regime sign(f_j(H_j)) they induce.

#ifndef SWL_POLICY_NET_HPP
#define SWL_POLICY_NET_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swl/numgrad.hpp"
#include "swl/trajectories.hpp"

namespace swl {

enum class PolicyKind { Linear, Nonlinear };

std::string to_string(PolicyKind k);
PolicyKind parse_policy_kind(const std::string& s);

struct PolicyArch {
  PolicyKind kind = PolicyKind::Nonlinear;
  int input_dim = 0;
  int width = 32;
  int depth = 2;  // hidden tanh layers, nonlinear kind only

  [[nodiscard]] int hidden_layers() const { return kind == PolicyKind::Linear ? 0 : depth; }
  [[nodiscard]] std::size_t parameter_count() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const PolicyArch& a);
void from_json(const nlohmann::json& j, PolicyArch& a);

class PolicyNet {
 public:
  PolicyNet() = default;
  /// Weights drawn N(0, 1/fan_in), biases zero.
  PolicyNet(int T, PolicyArch arch, std::uint64_t seed);

  [[nodiscard]] int T() const { return static_cast<int>(layers_.size()); }
  [[nodiscard]] const PolicyArch& arch() const { return arch_; }

  /// Alternating weight (in x out) and bias (1 x out) matrices of a stage.
  [[nodiscard]] std::vector<Matrix>& stage_parameters(int stage) { return layers_.at(static_cast<std::size_t>(stage)); }
  [[nodiscard]] const std::vector<Matrix>& stage_parameters(int stage) const { return layers_.at(static_cast<std::size_t>(stage)); }
  /// Every parameter matrix, stage-major.
  [[nodiscard]] std::vector<Matrix*> parameters();
  [[nodiscard]] std::vector<const Matrix*> parameters() const;

  /// f_j(H) for every row of H (n x input_dim).
  [[nodiscard]] Vector score(int stage, const Matrix& histories) const;

  /// Declares this stage's parameters on `tape` (appended to `params`) and
  /// returns the n x 1 output node for input node `histories`.
  numgrad::Var build(numgrad::Tape& tape, int stage, numgrad::Var histories,
                     std::vector<numgrad::Var>& params) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static PolicyNet from_json(const nlohmann::json& j);

 private:
  PolicyArch arch_;
  std::vector<std::vector<Matrix>> layers_;
};

/// sign(f_j(H_j)) with H_j from `encoder`; sign(0) = +1.
class PolicyRegime final : public Regime {
 public:
  PolicyRegime(PolicyNet net, std::shared_ptr<const HistoryEncoder> encoder);

  [[nodiscard]] int stages() const override { return net_.T(); }
  [[nodiscard]] std::vector<int> decide(const Panel& panel, int stage) const override;

  [[nodiscard]] const PolicyNet& net() const { return net_; }
  [[nodiscard]] const HistoryEncoder& encoder() const { return *encoder_; }
  [[nodiscard]] std::shared_ptr<const HistoryEncoder> encoder_ptr() const { return encoder_; }

 private:
  PolicyNet net_;
  std::shared_ptr<const HistoryEncoder> encoder_;
};

/// All T decisions for every subject of a dataset (n x T of +-1).
[[nodiscard]] Matrix predict(const Regime& regime, const Dataset& ds);

}  // namespace swl

#endif  // SWL_POLICY_NET_HPP
