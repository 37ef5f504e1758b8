#pragma once

#include <Eigen/Dense>
#include <span>

namespace kmlr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Lower Cholesky factor of a symmetric matrix. On failure, adds
// jitter * 10^k * I for k = 0..escalations before giving up.
Matrix cholesky_lower(const Matrix& a, double jitter = 1e-10, int escalations = 3);

double min_eigenvalue(const Matrix& symmetric);
double max_abs(const Matrix& a);

double log_sum_exp(std::span<const double> values);
double log_add_exp(double a, double b);
double sigmoid(double x);
double log_sigmoid(double x);
// log cosh(x) = |x| + log1p(exp(-2|x|)) - log 2, overflow free.
double log_cosh(double x);
double logit(double p);

}  // namespace kmlr
