#include "swl/training.hpp"

#include <cmath>
#include <numeric>

#include "swl/error.hpp"
#include "swl/random.hpp"

namespace swl {

void TrainSpec::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (max_iterations < 1) throw ValidationError("max_iterations must be at least 1");
  if (!(tolerance >= 0.0)) throw ValidationError("tolerance must be nonnegative");
  if (batch_size < 0) throw ValidationError("batch_size must be nonnegative");
}

void to_json(nlohmann::json& j, const TrainSpec& s) {
  j = {{"learning_rate", s.learning_rate},
       {"max_iterations", s.max_iterations},
       {"tolerance", s.tolerance},
       {"batch_size", s.batch_size},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, TrainSpec& s) {
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.max_iterations = j.value("max_iterations", s.max_iterations);
  s.tolerance = j.value("tolerance", s.tolerance);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.seed = j.value("seed", s.seed);
}

OptimizeResult run_adam(int n, const TrainSpec& spec, numgrad::Adam& adam, const LossFn& loss,
                        bool check_tolerance, const std::string& what) {
  spec.validate();
  OptimizeResult out;
  std::vector<Matrix> grad;
  auto checked = [&](double v, int it) {
    if (!std::isfinite(v)) {
      throw DivergenceError(what + " loss became non-finite at iteration " + std::to_string(it));
    }
    return v;
  };

  const int batch = spec.batch_size == 0 || spec.batch_size >= n ? n : spec.batch_size;
  if (batch == n) {
    double prev = 0.0;
    for (int it = 0; it < spec.max_iterations; ++it) {
      const double v = checked(loss(nullptr, it, &grad), it);
      out.trace.push_back(v);
      if (check_tolerance && it > 0 && std::abs(v - prev) <= spec.tolerance) {
        out.reached_tolerance = true;
        return out;
      }
      prev = v;
      adam.step(grad);
      out.iterations = it + 1;
    }
    out.trace.push_back(checked(loss(nullptr, out.iterations, nullptr), out.iterations));
    return out;
  }

  Rng rng(derive_seed(spec.seed, 2));
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const int per_epoch = n / batch;
  double prev = 0.0;
  int it = 0;
  for (int epoch = 0; it < spec.max_iterations; ++epoch) {
    shuffle(order, rng);
    double total = 0.0;
    int steps = 0;
    for (int b = 0; b < per_epoch && it < spec.max_iterations; ++b, ++it) {
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(b) * batch,
                                          order.begin() + static_cast<std::ptrdiff_t>(b + 1) * batch);
      total += checked(loss(&rows, it, &grad), it);
      ++steps;
      adam.step(grad);
    }
    const double v = total / steps;
    out.trace.push_back(v);
    out.iterations = it;
    if (check_tolerance && epoch > 0 && std::abs(v - prev) <= spec.tolerance) {
      out.reached_tolerance = true;
      break;
    }
    prev = v;
  }
  return out;
}

}  // namespace swl
