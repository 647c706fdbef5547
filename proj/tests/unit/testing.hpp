#ifndef SWL_TESTING_HPP
#define SWL_TESTING_HPP

#include <vector>

#include "swl/random.hpp"
#include "swl/trajectories.hpp"

namespace swl::testutil {

/// Random balanced dataset with propensities in [0.1, 0.9].
inline Dataset random_dataset(Rng& rng, int n, int T, int p, bool immediate = false) {
  std::vector<Trajectory> out;
  for (int i = 0; i < n; ++i) {
    Trajectory tr;
    std::vector<double> r;
    for (int t = 0; t < T; ++t) {
      Vector x(p);
      for (int k = 0; k < p; ++k) x(k) = normal(rng);
      tr.covariates.push_back(x);
      tr.actions.push_back(bernoulli(rng, 0.5) ? 1 : -1);
      tr.propensities.push_back(uniform(rng, 0.1, 0.9));
      r.push_back(normal(rng));
    }
    double total = 0.0;
    for (double v : r) total += v;
    tr.total_reward = total;
    if (immediate) tr.immediate_rewards = r;
    out.push_back(std::move(tr));
  }
  return Dataset(std::move(out));
}

/// Regime with independent random decisions per subject and stage, fixed
/// at construction.
inline TableRegime random_table(Rng& rng, int n, int T) {
  Matrix d(n, T);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) d(i, t) = bernoulli(rng, 0.5) ? 1.0 : -1.0;
  }
  return TableRegime(d);
}

/// The observed actions as a regime.
inline TableRegime behavior_regime(const Dataset& ds) { return TableRegime(ds.panel().actions); }

}  // namespace swl::testutil

#endif  // SWL_TESTING_HPP
