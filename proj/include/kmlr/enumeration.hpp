#pragma once

#include "kmlr/gibbs_mlr.hpp"
#include "kmlr/linalg.hpp"
#include "kmlr/model_core.hpp"

namespace kmlr {

// Exact posterior of the hidden pair choice for small masked problems, by
// summing the Gaussian marginal likelihood over every hidden assignment and
// every mixture-label pattern. The prior must pin tau2 and the mixture
// weights; sigma2 is pinned, or integrated numerically against its
// inverse-gamma prior when fixed_sigma2 is unset.
//
// Returns, per unit, P(X_u = a_u | D) for model-X views or
// P(sign(beta~_u) = + | D) for fixed-X views (view frame).
Vector brute_force_posterior_view(const MaskedView& view, const PriorConfig& prior);

// Same, oriented: P(X_u = x_u | D), the probability of the true assignment.
Vector brute_force_posterior(const MaskedDataset& masked, const PriorConfig& prior);

}  // namespace kmlr
