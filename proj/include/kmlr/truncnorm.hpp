#pragma once

#include "kmlr/rng.hpp"

namespace kmlr {

// Standard normal conditioned on Z > lower. Uses plain rejection for
// lower <= 0, exponential-proposal rejection in the tail, and falls back to
// the inverse CDF if rejection keeps failing.
double truncnorm_lower(Rng& rng, double lower);

// Inverse-CDF draw of Z > lower with long double intermediate precision.
double truncnorm_lower_inverse_cdf(Rng& rng, double lower);

// N(mean, 1) restricted to (0, inf) when positive is true, else (-inf, 0).
double truncnorm_sign(Rng& rng, double mean, bool positive);

}  // namespace kmlr
