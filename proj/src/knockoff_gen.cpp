#include "kmlr/knockoff_gen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kmlr/errors.hpp"
#include "kmlr/rng.hpp"

namespace kmlr {

namespace {

void require_square_pd(const Matrix& sigma, const char* who) {
  if (sigma.rows() != sigma.cols() || sigma.rows() == 0) {
    throw DataError(std::string(who) + ": covariance must be a nonempty square matrix");
  }
  if (!sigma.allFinite()) throw DataError(std::string(who) + ": covariance has non-finite entries");
  if (max_abs(sigma - sigma.transpose()) > 1e-8 * std::max(1.0, max_abs(sigma))) {
    throw DataError(std::string(who) + ": covariance is not symmetric");
  }
  if (!(min_eigenvalue(sigma) > 0.0)) {
    throw DataError(std::string(who) + ": covariance is not positive definite");
  }
}

void require_unit_diagonal(const Matrix& sigma, const char* who) {
  for (Eigen::Index j = 0; j < sigma.rows(); ++j) {
    if (std::abs(sigma(j, j) - 1.0) > 1e-6) {
      throw DataError(std::string(who) + ": expected a correlation matrix (unit diagonal)");
    }
  }
}

double feasible_min_eig(const Matrix& sigma, const Matrix& s) {
  const Matrix d = 2.0 * sigma - s;
  return min_eigenvalue(0.5 * (d + d.transpose()));
}

Matrix block_of(const Matrix& m, const std::vector<int>& idx) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  Matrix out(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b) out(a, b) = m(idx[a], idx[b]);
  return out;
}

}  // namespace

void SMatrixSpec::validate() const {
  if (!(tol > 0.0)) throw ConfigError("S-matrix tol must be positive");
  if (max_iter < 1) throw ConfigError("S-matrix max_iter must be at least 1");
  if (!(min_eig_clamp > 0.0 && min_eig_clamp <= 1e-3)) {
    throw ConfigError("min_eig_clamp must lie in (0, 1e-3]");
  }
}

Vector s_equicorrelated(const Matrix& sigma, double min_eig_clamp) {
  require_square_pd(sigma, "s_equicorrelated");
  require_unit_diagonal(sigma, "s_equicorrelated");
  const double lam = min_eigenvalue(sigma);
  const double level = std::min(2.0 * lam, 1.0) * (1.0 - min_eig_clamp);
  return Vector::Constant(sigma.rows(), level);
}

double mvr_objective(const Matrix& sigma, const Matrix& s) {
  const Matrix d = 2.0 * sigma - s;
  Eigen::LLT<Matrix> llt_d(0.5 * (d + d.transpose()));
  Eigen::LLT<Matrix> llt_s(0.5 * (s + s.transpose()));
  if (llt_d.info() != Eigen::Success || llt_s.info() != Eigen::Success) {
    return std::numeric_limits<double>::infinity();
  }
  const Matrix id = Matrix::Identity(sigma.rows(), sigma.cols());
  return llt_s.solve(id).trace() + llt_d.solve(id).trace();
}

Vector s_mvr(const Matrix& sigma, const SMatrixSpec& spec) {
  spec.validate();
  require_square_pd(sigma, "s_mvr");
  require_unit_diagonal(sigma, "s_mvr");
  const Eigen::Index p = sigma.rows();

  // Start strictly inside the feasible set, from the equicorrelated point.
  Vector s = Vector::Constant(p, std::min(2.0 * min_eigenvalue(sigma), 1.0) * 0.5);
  Matrix d = 2.0 * sigma;
  d.diagonal() -= s;
  Matrix dinv = d.llt().solve(Matrix::Identity(p, p));
  double obj = s.cwiseInverse().sum() + dinv.trace();

  for (int sweep = 0; sweep < spec.max_iter; ++sweep) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double dj = dinv(j, j);
      const double cj = dinv.col(j).squaredNorm();
      const double root = std::sqrt(cj);
      const double delta = (1.0 - root * s(j)) / (dj + root);
      if (!std::isfinite(delta) || delta == 0.0) continue;
      const double denom = 1.0 - delta * dj;
      if (!(denom > 0.0) || !(s(j) + delta > 0.0)) continue;
      // Sherman-Morrison for D - delta e_j e_j'.
      const Vector col = dinv.col(j);
      dinv.noalias() += (delta / denom) * col * col.transpose();
      s(j) += delta;
    }
    // Recompute from scratch to keep the inverse from drifting.
    d = 2.0 * sigma;
    d.diagonal() -= s;
    Eigen::LLT<Matrix> llt(d);
    if (llt.info() != Eigen::Success) throw NumericalError("s_mvr lost feasibility");
    dinv = llt.solve(Matrix::Identity(p, p));
    const double next = s.cwiseInverse().sum() + dinv.trace();
    const double decrease = obj - next;
    obj = next;
    if (decrease < spec.tol * std::max(1.0, std::abs(obj))) break;
  }
  s *= 1.0 - spec.min_eig_clamp;
  Matrix sd = s.asDiagonal();
  if (!(feasible_min_eig(sigma, sd) > 0.0)) throw NumericalError("s_mvr produced an infeasible S");
  return s;
}

Matrix s_matrix(const Matrix& sigma, const SMatrixSpec& spec) {
  require_square_pd(sigma, "s_matrix");
  const Vector sd = sigma.diagonal().cwiseSqrt();
  const Vector inv = sd.cwiseInverse();
  Matrix corr = inv.asDiagonal() * sigma * inv.asDiagonal();
  corr.diagonal().setOnes();
  const Vector s = spec.method == SMethod::equicorrelated ? s_equicorrelated(corr, spec.min_eig_clamp)
                                                          : s_mvr(corr, spec);
  return Matrix(sd.cwiseProduct(s).cwiseProduct(sd).asDiagonal());
}

Matrix group_s_block(const Matrix& sigma, const Partition& groups, const SMatrixSpec& spec) {
  spec.validate();
  require_square_pd(sigma, "group_s_block");
  const Eigen::Index p = sigma.rows();
  groups.validate(static_cast<int>(p));
  if (groups.all_singletons()) return s_matrix(sigma, spec);

  const int m = groups.size();
  Matrix blocks = Matrix::Zero(p, p);
  for (int g = 0; g < m; ++g) {
    const auto& idx = groups[g];
    const Matrix b = block_of(sigma, idx);
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t c = 0; c < idx.size(); ++c) blocks(idx[a], idx[c]) = b(a, c);
  }
  // Equicorrelated group level: gamma = min(1, 2 lambda_min(D^-1/2 Sigma D^-1/2)).
  Eigen::SelfAdjointEigenSolver<Matrix> es(blocks);
  const Vector ev = es.eigenvalues();
  const Matrix inv_sqrt = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
                          es.eigenvectors().transpose();
  const double lam = min_eigenvalue(inv_sqrt * sigma * inv_sqrt);
  const double gamma_eq = std::min(1.0, 2.0 * lam);

  auto assemble = [&](const Vector& gamma) {
    Matrix s = Matrix::Zero(p, p);
    for (int g = 0; g < m; ++g)
      for (int a : groups[g])
        for (int c : groups[g]) s(a, c) = gamma(g) * blocks(a, c);
    return s;
  };

  Vector gamma = Vector::Constant(m, gamma_eq);
  if (spec.method == SMethod::mvr) {
    gamma *= 0.5;
    double obj = mvr_objective(sigma, assemble(gamma));
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int sweep = 0; sweep < spec.max_iter; ++sweep) {
      const double before = obj;
      for (int g = 0; g < m; ++g) {
        auto f = [&](double v) {
          Vector trial = gamma;
          trial(g) = v;
          return mvr_objective(sigma, assemble(trial));
        };
        // Largest feasible gamma_g by bisection, then golden section inside.
        double lo = gamma(g), hi = std::max(2.0 * gamma(g), 1.0);
        while (std::isfinite(f(hi)) && hi < 1e6) hi *= 2.0;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          (std::isfinite(f(mid)) ? lo : hi) = mid;
        }
        double a = 0.0, b = lo;
        double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
        double f1 = f(x1), f2 = f(x2);
        for (int it = 0; it < 80 && b - a > 1e-12; ++it) {
          if (f1 < f2) {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - phi * (b - a); f1 = f(x1);
          } else {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + phi * (b - a); f2 = f(x2);
          }
        }
        const double cand = 0.5 * (a + b);
        const double fc = f(cand);
        if (fc < obj) {
          gamma(g) = cand;
          obj = fc;
        }
      }
      if (before - obj < spec.tol * std::max(1.0, std::abs(obj))) break;
    }
  }
  Matrix s = assemble(gamma) * (1.0 - spec.min_eig_clamp);
  if (!(feasible_min_eig(sigma, s) > 0.0)) throw NumericalError("group_s_block produced an infeasible S");
  return s;
}

Matrix fixed_x_knockoffs(const Matrix& x, const Matrix& s) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n < 2 * p) {
    throw DataError("fixed-X knockoffs need n >= 2p (n = " + std::to_string(n) +
                    ", p = " + std::to_string(p) + ")");
  }
  if (s.rows() != p || s.cols() != p) throw DataError("S must be p x p");
  if (s.isZero(0.0)) return x;
  const Matrix sigma = x.transpose() * x;
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw DataError("X'X is singular");
  const Matrix sinv_s = llt.solve(s);
  Matrix m = 2.0 * s - s * sinv_s;
  m = (0.5 * (m + m.transpose())).eval();
  const Matrix c = cholesky_lower(m).transpose();

  // Orthonormal complement of [X, 1] (or of X alone when n < 2p + 1).
  const bool with_intercept = n >= 2 * p + 1;
  Matrix basis(n, p + (with_intercept ? 1 : 0));
  basis.leftCols(p) = x;
  if (with_intercept) basis.col(p).setOnes();
  Eigen::HouseholderQR<Matrix> qr(basis);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix u = q.middleCols(basis.cols(), p);

  return x - x * sinv_s + u * c;
}

Matrix gaussian_mx_knockoffs(const Matrix& x, const Matrix& sigma, const Matrix& s,
                             std::uint64_t seed) {
  const Eigen::Index p = x.cols();
  if (sigma.rows() != p || sigma.cols() != p || s.rows() != p || s.cols() != p) {
    throw DataError("Sigma and S must be p x p");
  }
  require_square_pd(sigma, "gaussian_mx_knockoffs");
  if (s.isZero(0.0)) return x;
  const Matrix sinv_s = sigma.llt().solve(s);
  Matrix cond = 2.0 * s - s * sinv_s;
  cond = (0.5 * (cond + cond.transpose())).eval();
  const Matrix l = cholesky_lower(cond);
  Rng rng(derive_seed(seed, Stream::knockoffs));
  Matrix z(x.rows(), p);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < p; ++j) z(i, j) = rng.normal();
  return x - x * sinv_s + z * l.transpose();
}

Matrix shrinkage_covariance(const Matrix& x) {
  if (x.rows() < 2) throw DataError("covariance estimate needs at least two rows");
  const Matrix centered = x.rowwise() - x.colwise().mean();
  Matrix cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  const Vector diag = cov.diagonal();
  cov *= 0.9;
  cov.diagonal() = diag;
  return cov;
}

KnockoffModel make_knockoffs(const Matrix& x, KnockoffKind kind, const SMatrixSpec& spec,
                             std::uint64_t seed, const std::optional<Matrix>& sigma,
                             const std::optional<Partition>& groups) {
  KnockoffModel km;
  km.kind = kind;
  km.groups = groups;
  if (kind == KnockoffKind::fixed_x) {
    km.sigma = x.transpose() * x;
  } else {
    km.sigma = sigma ? *sigma : shrinkage_covariance(x);
  }
  if (km.sigma.rows() != x.cols()) throw DataError("covariance dimension does not match X");
  km.s = groups ? group_s_block(km.sigma, *groups, spec) : s_matrix(km.sigma, spec);
  km.x_tilde = kind == KnockoffKind::fixed_x ? fixed_x_knockoffs(x, km.s)
                                             : gaussian_mx_knockoffs(x, km.sigma, km.s, seed);
  return km;
}

}  // namespace kmlr
