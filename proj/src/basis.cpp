#include "kmlr/basis.hpp"

#include <algorithm>
#include <cmath>

#include "kmlr/errors.hpp"

namespace kmlr {

Matrix cubic_spline_columns(const Vector& x, const Vector& knots) {
  Matrix out(x.size(), 3 + knots.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x(i);
    out(i, 0) = v;
    out(i, 1) = v * v;
    out(i, 2) = v * v * v;
    for (Eigen::Index k = 0; k < knots.size(); ++k) {
      const double t = std::max(v - knots(k), 0.0);
      out(i, 3 + k) = t * t * t;
    }
  }
  return out;
}

namespace {

Vector pooled_quantile_knots(const Vector& a, const Vector& b, int count) {
  std::vector<double> pooled(a.data(), a.data() + a.size());
  pooled.insert(pooled.end(), b.data(), b.data() + b.size());
  std::sort(pooled.begin(), pooled.end());
  Vector knots(count);
  const double last = static_cast<double>(pooled.size() - 1);
  for (int k = 0; k < count; ++k) {
    const double pos = last * static_cast<double>(k + 1) / static_cast<double>(count + 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, pooled.size() - 1);
    knots(k) = pooled[lo] + (pos - static_cast<double>(lo)) * (pooled[hi] - pooled[lo]);
  }
  return knots;
}

void finish(UnitBasis& ub) {
  for (int side = 0; side < 2; ++side) {
    const Matrix g = ub.phi[side].transpose() * ub.phi[side];
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    ub.eigvec[side] = es.eigenvectors();
    ub.eigval[side] = es.eigenvalues().cwiseMax(0.0);
  }
}

}  // namespace

std::vector<UnitBasis> build_basis(const MaskedView& view, BasisKind kind, int knots) {
  const int m = view.num_units();
  std::vector<UnitBasis> out(static_cast<std::size_t>(m));
  if (kind == BasisKind::cubic_spline && knots < 0) throw ConfigError("knot count must be >= 0");
  for (int u = 0; u < m; ++u) {
    UnitBasis& ub = out[static_cast<std::size_t>(u)];
    if (kind == BasisKind::identity) {
      ub.phi[0] = view.unit_block(view.a, u);
      ub.phi[1] = view.unit_block(view.b, u);
    } else {
      const auto& cols = view.units[u];
      const Eigen::Index per = 3 + knots;
      const auto d = static_cast<Eigen::Index>(cols.size()) * per;
      ub.phi[0].resize(view.n(), d);
      ub.phi[1].resize(view.n(), d);
      for (std::size_t c = 0; c < cols.size(); ++c) {
        const Vector xa = view.a.col(cols[c]);
        const Vector xb = view.b.col(cols[c]);
        const Vector kn = pooled_quantile_knots(xa, xb, knots);
        Matrix fa = cubic_spline_columns(xa, kn);
        Matrix fb = cubic_spline_columns(xb, kn);
        for (Eigen::Index k = 0; k < per; ++k) {
          const double mean = 0.5 * (fa.col(k).mean() + fb.col(k).mean());
          fa.col(k).array() -= mean;
          fb.col(k).array() -= mean;
          const double norm = std::sqrt(0.5 * (fa.col(k).squaredNorm() + fb.col(k).squaredNorm()));
          if (norm > 0.0) {
            fa.col(k) /= norm;
            fb.col(k) /= norm;
          }
        }
        ub.phi[0].middleCols(static_cast<Eigen::Index>(c) * per, per) = fa;
        ub.phi[1].middleCols(static_cast<Eigen::Index>(c) * per, per) = fb;
      }
    }
    finish(ub);
  }
  return out;
}

}  // namespace kmlr
