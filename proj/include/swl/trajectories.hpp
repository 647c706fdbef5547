// Observed multi-stage trajectories, regimes, history encoders and the
// matching count between a trajectory and a regime.

#ifndef SWL_TRAJECTORIES_HPP
#define SWL_TRAJECTORIES_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "swl/numgrad.hpp"

namespace swl {

/// One subject's full observation sequence. Stages are 0-based in code.
struct Trajectory {
  std::vector<Vector> covariates;     // X_1..X_T, each of dimension p
  std::vector<int> actions;           // A_1..A_T in {-1, +1}
  std::vector<double> propensities;   // probability of the observed action
  double total_reward = 0.0;
  std::optional<std::vector<double>> immediate_rewards;

  [[nodiscard]] int stages() const { return static_cast<int>(actions.size()); }
};

/// Stage-major view of a set of (possibly partial) trajectories.
///
/// Regimes and encoders evaluated at stage j read covariates[0..j] and
/// action columns 0..j-1 only.
struct Panel {
  int n = 0;
  int T = 0;
  int p = 0;
  std::vector<Matrix> covariates;  // T entries, each n x p
  Matrix actions;                  // n x T

  static Panel zeros(int n, int T, int p);
};

/// Homogeneous collection of trajectories (balanced design).
class Dataset {
 public:
  Dataset() = default;
  /// Validates every invariant; throws ValidationError on violation.
  explicit Dataset(std::vector<Trajectory> trajectories, std::optional<std::uint64_t> seed = {});

  [[nodiscard]] int n() const { return static_cast<int>(trajectories_.size()); }
  [[nodiscard]] int T() const { return T_; }
  [[nodiscard]] int p() const { return p_; }
  [[nodiscard]] bool has_immediate_rewards() const { return has_immediate_; }
  [[nodiscard]] std::optional<std::uint64_t> seed() const { return seed_; }

  [[nodiscard]] const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }
  [[nodiscard]] const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  [[nodiscard]] auto begin() const { return trajectories_.begin(); }
  [[nodiscard]] auto end() const { return trajectories_.end(); }

  [[nodiscard]] Panel panel() const;
  [[nodiscard]] Vector rewards() const;
  /// n x T matrix of recorded propensities.
  [[nodiscard]] Matrix propensities() const;
  [[nodiscard]] Dataset subset(const std::vector<std::size_t>& indices) const;

 private:
  std::vector<Trajectory> trajectories_;
  int T_ = 0;
  int p_ = 0;
  bool has_immediate_ = false;
  std::optional<std::uint64_t> seed_;
};

/// Throws ValidationError if `traj` breaks a Trajectory invariant.
void validate_trajectory(const Trajectory& traj, std::size_t index);

/// Deterministic summary map H_j = S_j(X_1, A_1, ..., A_{j-1}, X_j).
class HistoryEncoder {
 public:
  virtual ~HistoryEncoder() = default;
  [[nodiscard]] virtual int dim() const = 0;
  /// Encoded histories at `stage` for every row of the panel (n x dim()).
  [[nodiscard]] virtual Matrix encode(const Panel& panel, int stage) const = 0;
  [[nodiscard]] virtual nlohmann::json to_json() const = 0;
};

/// Recency-aligned concatenation [X_j, X_{j-1}, ..., A_{j-1}, A_{j-2}, ...]
/// over the last `window` stages, zero-padded to a fixed width.
class ConcatEncoder final : public HistoryEncoder {
 public:
  /// window = 0 uses the full history of a T-stage panel.
  ConcatEncoder(int T, int p, int window = 0);

  [[nodiscard]] int dim() const override;
  [[nodiscard]] Matrix encode(const Panel& panel, int stage) const override;
  [[nodiscard]] nlohmann::json to_json() const override;
  [[nodiscard]] int window() const { return window_; }

 private:
  int T_;
  int p_;
  int window_;
};

/// A sequence of decision rules D_1..D_T with signed outputs.
class Regime {
 public:
  virtual ~Regime() = default;
  [[nodiscard]] virtual int stages() const = 0;
  /// Decisions at `stage` for every panel row; must only read the prefix.
  [[nodiscard]] virtual std::vector<int> decide(const Panel& panel, int stage) const = 0;
};

/// Regime given by a fixed n x T table of decisions (row = subject).
class TableRegime final : public Regime {
 public:
  explicit TableRegime(Matrix decisions) : decisions_(std::move(decisions)) {}
  [[nodiscard]] int stages() const override { return static_cast<int>(decisions_.cols()); }
  [[nodiscard]] std::vector<int> decide(const Panel& panel, int stage) const override;

 private:
  Matrix decisions_;
};

/// Regime emitting sign(f_j(H_j)) for a function of the encoded history.
/// sign(0) is +1.
inline int sign_decision(double f) { return f >= 0.0 ? 1 : -1; }

/// n x T matrix with entry 1 where A_ij = D_j(H_ij) and 0 otherwise; the
/// history always comes from the observed prefix.
[[nodiscard]] Matrix match_indicators(const Panel& panel, const Regime& regime);
[[nodiscard]] Matrix match_indicators(const Dataset& ds, const Regime& regime);

/// K = number of stages where the observed action equals the regime decision.
[[nodiscard]] int matching_count(const Trajectory& traj, const Regime& regime);
[[nodiscard]] std::vector<int> matching_counts(const Dataset& ds, const Regime& regime);

// Persistence.
[[nodiscard]] nlohmann::json dataset_to_json(const Dataset& ds);
[[nodiscard]] Dataset dataset_from_json(const nlohmann::json& doc);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
[[nodiscard]] Dataset load_dataset(const std::filesystem::path& path);
/// One row per subject-stage; the reward column is filled on the last stage.
void export_csv(const Dataset& ds, const std::filesystem::path& path);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded random partition with round(n * fraction) training subjects.
[[nodiscard]] Split split_indices(std::size_t n, double train_fraction, std::uint64_t seed);
[[nodiscard]] std::pair<Dataset, Dataset> train_test_split(const Dataset& ds,
                                                           double train_fraction,
                                                           std::uint64_t seed);

}  // namespace swl

#endif  // SWL_TRAJECTORIES_HPP
