#pragma once

#include <cstdint>
#include <optional>

#include "kmlr/linalg.hpp"
#include "kmlr/model_core.hpp"

namespace kmlr {

enum class SMethod { equicorrelated, mvr };

struct SMatrixSpec {
  SMethod method = SMethod::mvr;
  double tol = 1e-10;
  int max_iter = 200;
  double min_eig_clamp = 1e-4;

  void validate() const;
};

// Diagonal S for a correlation matrix.
Vector s_equicorrelated(const Matrix& sigma, double min_eig_clamp = 1e-4);
Vector s_mvr(const Matrix& sigma, const SMatrixSpec& spec = {});

// Tr(S^-1) + Tr((2 Sigma - S)^-1), i.e. the trace of the inverse joint Gram
// matrix [[Sigma, Sigma - S], [Sigma - S, Sigma]]. Infinite when infeasible.
double mvr_objective(const Matrix& sigma, const Matrix& s);

// S for an arbitrary covariance: computed on the correlation scale and mapped
// back with the standard deviations.
Matrix s_matrix(const Matrix& sigma, const SMatrixSpec& spec);

// Block-diagonal S on the group pattern.
Matrix group_s_block(const Matrix& sigma, const Partition& groups, const SMatrixSpec& spec = {});

// X~ = X (I - Sigma^-1 S) + U C with U'[X, 1] = 0 (U'X = 0 when n < 2p + 1)
// and C'C = 2S - S Sigma^-1 S, Sigma = X'X.
Matrix fixed_x_knockoffs(const Matrix& x, const Matrix& s);

// Rows of X~ drawn from N(x_i (I - Sigma^-1 S), 2S - S Sigma^-1 S).
Matrix gaussian_mx_knockoffs(const Matrix& x, const Matrix& sigma, const Matrix& s,
                             std::uint64_t seed);

// Empirical covariance of the rows with off-diagonal entries shrunk by 10%.
Matrix shrinkage_covariance(const Matrix& x);

// Builds the full KnockoffModel. For fixed-X, sigma is X'X; for model-X the
// covariance is `sigma` if given, else the shrinkage estimate.
KnockoffModel make_knockoffs(const Matrix& x, KnockoffKind kind, const SMatrixSpec& spec,
                             std::uint64_t seed, const std::optional<Matrix>& sigma = std::nullopt,
                             const std::optional<Partition>& groups = std::nullopt);

}  // namespace kmlr
