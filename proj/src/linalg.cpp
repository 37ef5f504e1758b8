#include "kmlr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kmlr/errors.hpp"

namespace kmlr {

Matrix cholesky_lower(const Matrix& a, double jitter, int escalations) {
  if (a.rows() != a.cols()) throw NumericalError("cholesky_lower: matrix is not square");
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const Matrix identity = Matrix::Identity(a.rows(), a.cols());
  double eps = jitter;
  for (int k = 0; k <= escalations; ++k, eps *= 10.0) {
    llt.compute(a + eps * identity);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalError("Cholesky factorization failed after jitter escalation");
}

double min_eigenvalue(const Matrix& symmetric) {
  if (symmetric.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double log_cosh(double x) {
  const double ax = std::abs(x);
  return ax + std::log1p(std::exp(-2.0 * ax)) - std::log(2.0);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace kmlr
