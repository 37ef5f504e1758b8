#pragma once

#include <cstdint>
#include <random>

namespace kmlr {

// Stream tags used when deriving independent RNG streams from a user seed.
enum class Stream : std::uint64_t {
  mask = 1,
  knockoffs = 2,
  gibbs = 3,
  tie_break = 4,
  cross_validation = 5,
  instance = 6,
  covariance = 7,
  chain_init = 8,
};

std::uint64_t splitmix64(std::uint64_t x);

// Counter-style seed derivation: a pure function of (seed, tag, index).
std::uint64_t derive_seed(std::uint64_t seed, Stream tag, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform();  // (0, 1)
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double gamma(double shape, double rate = 1.0);
  double inv_gamma(double shape, double rate) { return 1.0 / gamma(shape, rate); }
  double beta(double a, double b);
  double exponential(double rate);
  bool bernoulli(double prob) { return uniform() < prob; }
  std::uint64_t next_u64() { return engine_(); }
  std::size_t index(std::size_t n);  // uniform on {0, ..., n-1}

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace kmlr
