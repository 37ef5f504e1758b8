#pragma once

#include <cstdint>

#include "kmlr/linalg.hpp"
#include "kmlr/model_core.hpp"

namespace kmlr {

// Objective: 0.5 ||y - Z b||^2 + lambda * n * ||b||_1.
struct LassoFit {
  Vector coefficients;
  double lambda = 0.0;
  bool converged = false;
  double kkt_violation = 0.0;
  int sweeps = 0;
};

double lasso_objective(const Matrix& z, const Vector& y, const Vector& b, double lambda);
// Max KKT residual of b at lambda.
double lasso_kkt_violation(const Matrix& z, const Vector& y, const Vector& b, double lambda);

// Cyclic coordinate descent with an active set and a final full KKT pass.
LassoFit lasso_fit(const Matrix& z, const Vector& y, double lambda, double tol = 1e-12,
                   int max_iter = 100000, const Vector* warm_start = nullptr);

// `count` log-spaced values from ||Z'y||_inf / n down by `ratio`.
Vector lambda_grid(const Matrix& z, const Vector& y, int count = 100, double ratio = 1e-3);

// Largest grid value at which each coefficient is active (0 if never). A
// coefficient counts as active once it is nonzero or its gradient reaches the
// penalty bound, so exact duplicate columns enter together.
Vector lambda_entry_path(const Matrix& z, const Vector& y, const Vector& grid);

// W_j = |b_j| - |b_{j+p}|.
FeatureStatVector lcd(const LassoFit& fit);
// W_j = sign(l_j - l_{j+p}) max(l_j, l_{j+p}).
FeatureStatVector lsm(const Vector& entry_points);

// sigma_hat sqrt(2 log p) / n, sigma_hat from the residual of y off span(Z).
double fixed_x_lambda(const Matrix& z, const Vector& y);
// K-fold cross-validated lambda on the grid; folds drawn from the seed.
double cv_lambda(const Matrix& z, const Vector& y, const Vector& grid, int folds, std::uint64_t seed);

// LCD or LSM on the masked pair [a, b] with response y (for fixed-X masked
// data y comes from the dataset). Returned W is oriented and tie-broken.
FeatureStatVector lasso_statistic(const MaskedDataset& masked, const Vector& y, StatMethod method,
                                  std::uint64_t seed);

}  // namespace kmlr
