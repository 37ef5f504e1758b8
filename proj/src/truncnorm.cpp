#include "kmlr/truncnorm.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <cmath>

namespace kmlr {

double truncnorm_lower_inverse_cdf(Rng& rng, double lower) {
  using boost::math::erfc;
  using boost::math::erfc_inv;
  const long double root2 = std::sqrt(2.0L);
  const long double tail = 0.5L * erfc(static_cast<long double>(lower) / root2);
  if (!(tail > 0.0L)) return lower;
  const long double t = static_cast<long double>(rng.uniform()) * tail;
  const double z = static_cast<double>(root2 * erfc_inv(2.0L * t));
  return z > lower ? z : lower;
}

double truncnorm_lower(Rng& rng, double lower) {
  constexpr int kMaxTries = 10000;
  if (lower <= 0.0) {
    for (int i = 0; i < kMaxTries; ++i) {
      const double z = rng.normal();
      if (z > lower) return z;
    }
    return truncnorm_lower_inverse_cdf(rng, lower);
  }
  const double alpha = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  for (int i = 0; i < kMaxTries; ++i) {
    const double z = lower + rng.exponential(alpha);
    const double d = z - alpha;
    if (std::log(rng.uniform()) <= -0.5 * d * d) return z;
  }
  return truncnorm_lower_inverse_cdf(rng, lower);
}

double truncnorm_sign(Rng& rng, double mean, bool positive) {
  if (positive) return mean + truncnorm_lower(rng, -mean);
  return mean - truncnorm_lower(rng, mean);
}

}  // namespace kmlr
