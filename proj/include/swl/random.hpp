#ifndef SWL_RANDOM_HPP
#define SWL_RANDOM_HPP

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace swl {

/// std::mt19937_64 is fully specified by the standard; the boost
/// distributions below are used because their output is identical across
/// standard-library implementations.
using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent child seed for the `stream`-th consumer of `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(master, a), b);
}

inline double normal(Rng& rng) {
  boost::random::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  boost::random::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

/// Uniform integer in [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi) {
  boost::random::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

inline bool bernoulli(Rng& rng, double prob) {
  return boost::random::uniform_01<double>()(rng) < prob;
}

/// Fisher-Yates shuffle with portable index draws.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i - 1)));
    std::swap(v[i - 1], v[j]);
  }
}

/// `k` distinct values from [0, n), in draw order.
inline std::vector<int> sample_without_replacement(Rng& rng, int n, int k) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    const int j = uniform_int(rng, i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

}  // namespace swl

#endif  // SWL_RANDOM_HPP
