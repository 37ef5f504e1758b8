#pragma once

#include "kmlr/linalg.hpp"
#include "kmlr/model_core.hpp"

namespace kmlr {

// Empirical covariance of the sign-indicator columns, pooled over chains.
Matrix sign_cov(const GibbsTrace& trace, Eigen::Index min_samples = 100);

struct DecayReport {
  double max_offdiag = 0.0;  // largest |cov_ij|, i != j
  double max_ratio = 0.0;    // largest |cov_ij| / (C rho^|i-j|), i != j
  bool pass = true;
};

// Checks |cov_ij| <= C rho^|i-j| for every off-diagonal entry.
DecayReport decay_check(const Matrix& cov, double c = 1.0, double rho = 0.5);

// sign(W) * 2 (sigmoid(|W|) - 1/2).
Vector w_display_transform(const Vector& w);

}  // namespace kmlr
