#ifndef SWL_TRAINING_HPP
#define SWL_TRAINING_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "swl/numgrad.hpp"

namespace swl {

/// Optimizer settings shared by every trainer.
struct TrainSpec {
  double learning_rate = 1e-2;
  int max_iterations = 2000;
  /// Training stops once |L_t - L_{t-1}| <= tolerance (per epoch when
  /// minibatching).
  double tolerance = 1e-6;
  /// 0 means full batch.
  int batch_size = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainSpec& s);
void from_json(const nlohmann::json& j, TrainSpec& s);

/// Loss (to be minimized) over the given rows, or all rows when `rows` is
/// null; fills `gradient` when non-null.
using LossFn = std::function<double(const std::vector<std::size_t>* rows, int iteration,
                                    std::vector<Matrix>* gradient)>;

struct OptimizeResult {
  std::vector<double> trace;
  int iterations = 0;
  bool reached_tolerance = false;
};

/// Adam descent on `loss` over `n` rows: full batch, or shuffled minibatches
/// of spec.batch_size with the trace and tolerance taken per epoch.
/// `what` names the model in the DivergenceError raised on a non-finite loss.
OptimizeResult run_adam(int n, const TrainSpec& spec, numgrad::Adam& adam, const LossFn& loss,
                        bool check_tolerance, const std::string& what);

}  // namespace swl

#endif  // SWL_TRAINING_HPP
