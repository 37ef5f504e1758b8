#include "kmlr/rng.hpp"

#include <cmath>

namespace kmlr {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, Stream tag, std::uint64_t index) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (static_cast<std::uint64_t>(tag) * 0xD1B54A32D192ED03ULL));
  return splitmix64(h ^ (index + 0x632BE59BD9B4E019ULL));
}

double Rng::uniform() {
  // 53 random bits, never exactly 0 or 1.
  for (;;) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

double Rng::normal() { return normal_(engine_); }

double Rng::gamma(double shape, double rate) {
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(engine_);
}

double Rng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

std::size_t Rng::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

}  // namespace kmlr
