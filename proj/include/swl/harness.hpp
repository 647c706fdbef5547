// Seeded Monte Carlo sweeps: every (grid point, replication) simulates one
// dataset, fits each requested method on the training split and scores it by
// oracle rollout, matching accuracy and held-out empirical value.

#ifndef SWL_HARNESS_HPP
#define SWL_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swl/baselines.hpp"
#include "swl/simulator.hpp"
#include "swl/stage_importance.hpp"

namespace swl {

enum class Method { SAL, SWL, KIPWL, Q, FullMatchIPWE };

std::string to_string(Method m);
Method parse_method(const std::string& s);

enum class EncoderChoice { Lstm, Concat };
enum class PropensitySource { Known, Fitted };

struct ExperimentSpec {
  std::vector<SimConfig> grid;  // SimConfig::seed is ignored; seeds come from master_seed
  std::vector<Method> methods;
  int replications = 10;
  double train_fraction = 0.8;
  int n_eval = 10000;
  std::string output_dir = "results";
  std::uint64_t master_seed = 0;
  int workers = 1;

  PolicyTrainOptions policy;
  ImportanceOptions importance;
  /// Policy input for SWL; the other policy learners use the concatenation
  /// encoder with a one-stage window.
  EncoderChoice swl_encoder = EncoderChoice::Lstm;
  PropensitySource propensity = PropensitySource::Known;
  bool q_use_immediate_rewards = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentSpec& s);
void from_json(const nlohmann::json& j, ExperimentSpec& s);

/// Learner settings shared by the sweep and the single-fit CLI path.
struct MethodSettings {
  PolicyTrainOptions policy;
  ImportanceOptions importance;
  EncoderChoice swl_encoder = EncoderChoice::Lstm;
  bool q_use_immediate_rewards = false;
};

[[nodiscard]] MethodSettings method_settings(const ExperimentSpec& spec);

/// A fitted learner: its regime plus a self-contained JSON document.
struct FittedMethod {
  Method method = Method::SAL;
  std::shared_ptr<const Regime> regime;
  std::optional<StageWeights> weights;  // SWL only
  nlohmann::json document;
};

/// Fits `method` on `train` with observed-action probabilities `props`.
/// Training seeds are derived from `seed`.
[[nodiscard]] FittedMethod fit_method(Method method, const Dataset& train, const Matrix& props,
                                      const MethodSettings& settings, std::uint64_t seed);

/// Rebuilds the regime stored by fit_method's document.
[[nodiscard]] std::shared_ptr<const Regime> regime_from_json(const nlohmann::json& doc);

struct ResultRow {
  int grid = 0;
  Method method = Method::SAL;
  int replication = 0;
  std::uint64_t seed = 0;
  double value = 0.0;              // oracle rollout
  double matching_accuracy = 0.0;
  double empirical_value = 0.0;    // NaN when no test subject fully matches
  double wall_seconds = 0.0;
  bool converged = false;
  std::string error;
};

/// Seed of replication `rep` at grid point `grid`.
[[nodiscard]] std::uint64_t replication_seed(std::uint64_t master, int grid, int rep);

/// One row per method, in spec.methods order.
[[nodiscard]] std::vector<ResultRow> run_replication(const ExperimentSpec& spec, int grid, int rep);

/// All rows sorted by (grid, method position in spec.methods, replication).
[[nodiscard]] std::vector<ResultRow> run_experiment(const ExperimentSpec& spec);

struct SummaryCell {
  int grid = 0;
  Method method = Method::SAL;
  int count = 0;
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  double accuracy_mean = 0.0;
  bool degenerate = false;  // a single row: sd and se are 0
};

struct Improvement {
  int grid = 0;
  Method best_proposed = Method::SAL;
  double proposed_mean = 0.0;
  Method best_competitor = Method::Q;
  double competitor_mean = 0.0;
  double rate = 0.0;  // (proposed - competitor) / |competitor|
};

struct Summary {
  std::vector<SummaryCell> cells;
  std::vector<Improvement> improvements;
  std::vector<std::string> warnings;
};

/// Converged rows only. A (grid, method) cell without rows is omitted with a
/// warning. Improvement compares the better of SAL/SWL with the better of
/// Q/FullMatchIPWE.
[[nodiscard]] Summary summarize(const std::vector<ResultRow>& rows, const std::vector<Method>& methods);

void write_rows_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
void write_timings_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
void write_summary_csv(const Summary& summary, const std::filesystem::path& path);
void write_improvement_csv(const Summary& summary, const std::filesystem::path& path);

/// Runs the sweep and writes rows.csv, timings.csv, summary.csv,
/// improvement.csv, config.echo.json and meta.json into spec.output_dir.
/// Returns the rows.
std::vector<ResultRow> run_and_write(const ExperimentSpec& spec);

}  // namespace swl

#endif  // SWL_HARNESS_HPP
