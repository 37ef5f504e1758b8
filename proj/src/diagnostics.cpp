#include "kmlr/diagnostics.hpp"

#include <cmath>

#include "kmlr/errors.hpp"

namespace kmlr {

Matrix sign_cov(const GibbsTrace& trace, Eigen::Index min_samples) {
  const Eigen::Index ns = trace.sign_indicators.rows();
  if (ns < min_samples || ns < 2) {
    throw DataError("sign_cov needs at least " + std::to_string(min_samples) + " samples, trace has " +
                    std::to_string(ns));
  }
  const Matrix bits = trace.sign_indicators.cast<double>();
  const Eigen::RowVectorXd mean = bits.colwise().mean();
  const Matrix centered = bits.rowwise() - mean;
  Matrix cov = centered.transpose() * centered / static_cast<double>(ns);
  return 0.5 * (cov + cov.transpose());
}

DecayReport decay_check(const Matrix& cov, double c, double rho) {
  if (cov.rows() != cov.cols()) throw DataError("decay_check needs a square matrix");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (c < 0.0) throw ConfigError("C must be nonnegative");
  DecayReport rep;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    for (Eigen::Index j = 0; j < cov.cols(); ++j) {
      if (i == j) continue;
      const double v = std::abs(cov(i, j));
      rep.max_offdiag = std::max(rep.max_offdiag, v);
      const double bound = c * std::pow(rho, static_cast<double>(std::abs(i - j)));
      const double ratio = v == 0.0 ? 0.0 : (bound > 0.0 ? v / bound : INFINITY);
      rep.max_ratio = std::max(rep.max_ratio, ratio);
    }
  }
  rep.pass = rep.max_ratio <= 1.0;
  return rep;
}

Vector w_display_transform(const Vector& w) {
  Vector out(w.size());
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    // 2 (sigmoid(x) - 1/2) = tanh(x / 2), which keeps precision near zero.
    const double mag = std::tanh(0.5 * std::abs(w(j)));
    out(j) = w(j) > 0 ? mag : (w(j) < 0 ? -mag : 0.0);
  }
  return out;
}

}  // namespace kmlr
