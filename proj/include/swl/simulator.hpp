// Synthetic multi-stage environment: baseline covariates, action-dependent
// progression, random optimal regimes, importance-weighted rewards, a
// behavior policy that follows the optimal decision with probability q, and
// counterfactual rollouts of arbitrary regimes.

#ifndef SWL_SIMULATOR_HPP
#define SWL_SIMULATOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swl/random.hpp"
#include "swl/trajectories.hpp"

namespace swl {

enum class RuleKind { Linear, Nonlinear };
enum class RuleSharing { Heterogeneous, Homogeneous };

std::string to_string(RuleKind k);
std::string to_string(RuleSharing s);
RuleKind parse_rule_kind(const std::string& s);
RuleSharing parse_rule_sharing(const std::string& s);

struct SimConfig {
  int n = 1000;
  int T = 5;
  int p = 20;
  RuleKind rule_kind = RuleKind::Nonlinear;
  RuleSharing rule_sharing = RuleSharing::Heterogeneous;
  double match_prob = 0.5;
  int n_important_stages = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);

enum class Basis { Identity, Square, Cube, Arctan, Sign };

double apply_basis(Basis b, double x);

/// One term beta * prod_{s in interaction} g_s(x_s) of a stage rule.
struct RuleTerm {
  int index = 0;
  double beta = 0.0;
  std::vector<int> interaction;  // always contains `index`; linear rules use only `index`
};

struct StageRule {
  std::vector<RuleTerm> terms;
  std::vector<Basis> basis;  // one transform per covariate, nonlinear rules only

  [[nodiscard]] double evaluate(const Eigen::Ref<const Vector>& x, RuleKind kind) const;
};

/// The simulator's optimal regime d*_t = sign(f*_t(X_t)), sign(0) = +1.
class OptimalRegime final : public Regime {
 public:
  OptimalRegime() = default;
  OptimalRegime(RuleKind kind, std::vector<StageRule> stages);

  [[nodiscard]] int stages() const override { return static_cast<int>(stages_.size()); }
  [[nodiscard]] std::vector<int> decide(const Panel& panel, int stage) const override;

  [[nodiscard]] double score(int stage, const Eigen::Ref<const Vector>& x) const;
  [[nodiscard]] int decision(int stage, const Eigen::Ref<const Vector>& x) const;
  [[nodiscard]] const StageRule& rule(int stage) const { return stages_[static_cast<std::size_t>(stage)]; }
  [[nodiscard]] RuleKind kind() const { return kind_; }

 private:
  RuleKind kind_ = RuleKind::Linear;
  std::vector<StageRule> stages_;
};

/// Per-stage base-reward coefficients and stage importance scores.
struct RewardSpec {
  std::vector<std::vector<std::pair<int, double>>> base_terms;  // per stage (index, beta)
  std::vector<double> omega;                                    // on the simplex
  std::vector<int> important_stages;                            // 0-based, sorted
  double noise_sd = 1.0;

  /// Expected immediate reward omega_t * (base + a * d*).
  [[nodiscard]] double mean_reward(int stage, const Eigen::Ref<const Vector>& x, int action,
                                   int optimal) const;
};

/// Ground truth of one simulated environment.
struct Environment {
  SimConfig config;
  OptimalRegime regime;
  RewardSpec reward;
};

/// Draws the optimal regime and reward specification for `config`.
[[nodiscard]] Environment make_environment(const SimConfig& config);

/// Samples `n` subjects from `env` under the behavior policy.
[[nodiscard]] Dataset sample_dataset(const Environment& env, int n, std::uint64_t seed);

struct Simulation {
  Dataset data;
  Environment env;
};

/// make_environment followed by sample_dataset of config.n subjects.
[[nodiscard]] Simulation generate(const SimConfig& config);

/// Histogram over K in 0..T of matches between behavior actions and d*,
/// streaming `n` subjects without storing them.
[[nodiscard]] std::vector<std::uint64_t> behavior_matching_histogram(const Environment& env,
                                                                     std::int64_t n,
                                                                     std::uint64_t seed);

struct RolloutResult {
  double mean_reward = 0.0;
  double reward_sd = 0.0;
  double matching_accuracy = 0.0;
};

/// Fresh subjects progressed under the evaluated regime's own decisions.
[[nodiscard]] RolloutResult rollout(const Regime& regime, const Environment& env, int n_eval,
                                    std::uint64_t seed);

[[nodiscard]] double oracle_rollout(const Regime& regime, const Environment& env, int n_eval,
                                    std::uint64_t seed);
[[nodiscard]] double matching_accuracy(const Regime& regime, const Environment& env, int n_eval,
                                       std::uint64_t seed);

/// Decisions drawn uniformly at random, independently per subject and stage.
class RandomRegime final : public Regime {
 public:
  RandomRegime(int T, std::uint64_t seed) : T_(T), seed_(seed) {}
  [[nodiscard]] int stages() const override { return T_; }
  [[nodiscard]] std::vector<int> decide(const Panel& panel, int stage) const override;

 private:
  int T_;
  std::uint64_t seed_;
};

/// The negation of another regime.
class ComplementRegime final : public Regime {
 public:
  explicit ComplementRegime(const Regime& base) : base_(base) {}
  [[nodiscard]] int stages() const override { return base_.stages(); }
  [[nodiscard]] std::vector<int> decide(const Panel& panel, int stage) const override;

 private:
  const Regime& base_;
};

}  // namespace swl

#endif  // SWL_SIMULATOR_HPP
