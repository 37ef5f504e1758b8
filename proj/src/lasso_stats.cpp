#include "kmlr/lasso_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kmlr/errors.hpp"
#include "kmlr/rng.hpp"

namespace kmlr {

namespace {

double soft(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

void check_inputs(const Matrix& z, const Vector& y) {
  if (z.rows() != y.size()) throw DataError("lasso: Z and y have different numbers of rows");
  if (z.cols() < 1) throw DataError("lasso: Z has no columns");
  if (!z.allFinite() || !y.allFinite()) throw DataError("lasso: non-finite input");
}

}  // namespace

double lasso_objective(const Matrix& z, const Vector& y, const Vector& b, double lambda) {
  return 0.5 * (y - z * b).squaredNorm() + lambda * static_cast<double>(z.rows()) * b.lpNorm<1>();
}

double lasso_kkt_violation(const Matrix& z, const Vector& y, const Vector& b, double lambda) {
  const Vector grad = z.transpose() * (y - z * b);
  const double pen = lambda * static_cast<double>(z.rows());
  double worst = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double v = b(j) != 0.0 ? std::abs(grad(j) - pen * (b(j) > 0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(grad(j)) - pen);
    worst = std::max(worst, v);
  }
  return worst;
}

namespace {

double gram_objective(const Matrix& g_mat, const Vector& c, double pen, const Vector& b) {
  return 0.5 * b.dot(g_mat * b) - c.dot(b) + pen * b.lpNorm<1>();
}

// Feature-sign step: solve the stationarity equations on the current support
// and sign pattern, then move toward that solution as far as the objective
// keeps improving, stopping at coordinates that cross zero. Returns true when
// the result satisfies KKT everywhere.
bool try_exact(const Matrix& g_mat, const Vector& c, double pen, const std::vector<Eigen::Index>& active, Vector& b,
               Vector& grad) {
  const auto m = static_cast<Eigen::Index>(active.size());
  Matrix ga(m, m);
  Vector rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index ji = active[static_cast<std::size_t>(i)];
    rhs(i) = c(ji) - pen * (b(ji) > 0.0 ? 1.0 : -1.0);
    for (Eigen::Index l = 0; l < m; ++l) ga(i, l) = g_mat(ji, active[static_cast<std::size_t>(l)]);
  }
  Eigen::LLT<Matrix> llt(ga);
  if (llt.info() != Eigen::Success) return false;
  const Vector sol = llt.solve(rhs);
  if (!sol.allFinite()) return false;
  Vector target = Vector::Zero(b.size());
  for (Eigen::Index i = 0; i < m; ++i) target(active[static_cast<std::size_t>(i)]) = sol(i);

  std::vector<double> steps{1.0};
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index j = active[static_cast<std::size_t>(i)];
    if (sol(i) * b(j) < 0.0) steps.push_back(b(j) / (b(j) - sol(i)));
  }
  double best_f = gram_objective(g_mat, c, pen, b);
  Vector best = b;
  bool moved = false;
  for (double t : steps) {
    Vector trial = b + t * (target - b);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index j = active[static_cast<std::size_t>(i)];
      if (sol(i) * b(j) < 0.0 && b(j) / (b(j) - sol(i)) <= t) trial(j) = 0.0;
    }
    const double f = gram_objective(g_mat, c, pen, trial);
    if (f < best_f) {
      best_f = f;
      best = trial;
      moved = true;
    }
  }
  if (!moved) return false;
  b = best;
  grad = c - g_mat * b;
  const double slack = pen * 1e-10 + 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    if (b(j) == 0.0) {
      if (std::abs(grad(j)) > pen + slack) return false;
    } else if (std::abs(grad(j) - pen * (b(j) > 0.0 ? 1.0 : -1.0)) > slack) {
      return false;
    }
  }
  return true;
}

// Coordinate descent on the Gram form: g = c - G b is kept current, so each
// coordinate update costs O(k) instead of O(n).
int cd_gram(const Matrix& g_mat, const Vector& c, double pen, double tol, int max_iter, Vector& b, bool& converged) {
  const Eigen::Index k = c.size();
  Vector grad = c - g_mat * b;
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());

  auto update = [&](Eigen::Index j) {
    const double gjj = g_mat(j, j);
    if (gjj <= 0.0) return 0.0;
    const double old = b(j);
    const double fresh = soft(grad(j) + gjj * old, pen) / gjj;
    if (fresh == old) return 0.0;
    grad.noalias() -= g_mat.col(j) * (fresh - old);
    b(j) = fresh;
    return std::abs(fresh - old) * gjj;
  };

  converged = false;
  int sweeps = 0;
  std::vector<Eigen::Index> active;
  while (sweeps < max_iter) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) change = std::max(change, update(j));
    ++sweeps;
    if (change <= tol * scale) {
      converged = true;
      break;
    }
    active.clear();
    for (Eigen::Index j = 0; j < k; ++j) {
      if (b(j) != 0.0) active.push_back(j);
    }
    if (!active.empty() && try_exact(g_mat, c, pen, active, b, grad)) continue;
    int inner_sweeps = 0;
    while (sweeps < max_iter) {
      double inner = 0.0;
      for (Eigen::Index j : active) inner = std::max(inner, update(j));
      ++sweeps;
      if (inner <= tol * scale) break;
      if (++inner_sweeps % 5 == 0) {
        active.erase(std::remove_if(active.begin(), active.end(), [&](Eigen::Index j) { return b(j) == 0.0; }),
                     active.end());
        if (!active.empty() && try_exact(g_mat, c, pen, active, b, grad)) break;
      }
    }
  }
  return sweeps;
}

}  // namespace

LassoFit lasso_fit(const Matrix& z, const Vector& y, double lambda, double tol, int max_iter,
                   const Vector* warm_start) {
  check_inputs(z, y);
  if (!(lambda > 0.0)) throw ConfigError("lasso: lambda must be positive");
  const Eigen::Index k = z.cols();
  const Matrix g_mat = z.transpose() * z;
  const Vector c = z.transpose() * y;
  Vector b = warm_start && warm_start->size() == k ? *warm_start : Vector::Zero(k);
  LassoFit fit;
  fit.lambda = lambda;
  const double pen = lambda * static_cast<double>(z.rows());
  if (c.cwiseAbs().maxCoeff() <= pen * (1.0 + 1e-12)) {
    fit.coefficients = Vector::Zero(k);
    fit.converged = true;
    fit.kkt_violation = lasso_kkt_violation(z, y, fit.coefficients, lambda);
    return fit;
  }
  fit.sweeps = cd_gram(g_mat, c, pen, tol, max_iter, b, fit.converged);
  fit.coefficients = b;
  fit.kkt_violation = lasso_kkt_violation(z, y, b, lambda);
  return fit;
}

Vector lambda_grid(const Matrix& z, const Vector& y, int count, double ratio) {
  check_inputs(z, y);
  if (count < 1) throw ConfigError("lambda grid needs at least one value");
  const double top = (z.transpose() * y).cwiseAbs().maxCoeff() / static_cast<double>(z.rows());
  if (!(top > 0.0)) throw DataError("lambda grid: Z'y is zero");
  Vector grid(count);
  for (int i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    grid(i) = top * std::pow(ratio, frac);
  }
  return grid;
}

Vector lambda_entry_path(const Matrix& z, const Vector& y, const Vector& grid) {
  check_inputs(z, y);
  if (grid.size() == 0) throw ConfigError("lambda_entry_path: empty grid");
  for (Eigen::Index i = 1; i < grid.size(); ++i) {
    if (!(grid(i) < grid(i - 1))) throw ConfigError("lambda grid must be strictly descending");
  }
  const Eigen::Index k = z.cols();
  Vector entry = Vector::Zero(k);
  Vector b = Vector::Zero(k);
  const double n = static_cast<double>(z.rows());
  const Matrix g_mat = z.transpose() * z;
  const Vector c = z.transpose() * y;
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const double pen = grid(i) * n;
    bool converged = false;
    cd_gram(g_mat, c, pen, 1e-12, 100000, b, converged);
    const Vector grad = c - g_mat * b;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (entry(j) > 0.0) continue;
      if (b(j) != 0.0 || std::abs(grad(j)) >= pen * (1.0 - 1e-9)) entry(j) = grid(i);
    }
  }
  return entry;
}

FeatureStatVector lcd(const LassoFit& fit) {
  const Eigen::Index k = fit.coefficients.size();
  if (k % 2 != 0) throw DataError("lcd: coefficient vector must have even length 2p");
  const Eigen::Index p = k / 2;
  FeatureStatVector out;
  out.method = StatMethod::lcd;
  out.w = fit.coefficients.head(p).cwiseAbs() - fit.coefficients.tail(p).cwiseAbs();
  out.tie_broken.assign(static_cast<std::size_t>(p), 0);
  return out;
}

FeatureStatVector lsm(const Vector& entry_points) {
  const Eigen::Index k = entry_points.size();
  if (k % 2 != 0) throw DataError("lsm: entry point vector must have even length 2p");
  const Eigen::Index p = k / 2;
  FeatureStatVector out;
  out.method = StatMethod::lsm;
  out.w.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double a = entry_points(j);
    const double b = entry_points(j + p);
    out.w(j) = a > b ? a : (a < b ? -b : 0.0);
  }
  out.tie_broken.assign(static_cast<std::size_t>(p), 0);
  return out;
}

double fixed_x_lambda(const Matrix& z, const Vector& y) {
  check_inputs(z, y);
  const Eigen::Index n = z.rows();
  const Eigen::Index p = std::max<Eigen::Index>(z.cols() / 2, 1);
  Eigen::ColPivHouseholderQR<Matrix> qr(z);
  const Eigen::Index rank = qr.rank();
  double sigma_hat;
  if (n > rank) {
    const Vector fitted = z * qr.solve(y);
    sigma_hat = (y - fitted).norm() / std::sqrt(static_cast<double>(n - rank));
  } else {
    sigma_hat = y.norm() / std::sqrt(static_cast<double>(n));
  }
  if (!(sigma_hat > 0.0)) sigma_hat = 1e-8;
  const double logp = std::log(static_cast<double>(std::max<Eigen::Index>(p, 2)));
  return sigma_hat * std::sqrt(2.0 * logp) / static_cast<double>(n);
}

double cv_lambda(const Matrix& z, const Vector& y, const Vector& grid, int folds, std::uint64_t seed) {
  check_inputs(z, y);
  const Eigen::Index n = z.rows();
  if (folds < 2 || folds > n) throw ConfigError("cross-validation needs 2 <= folds <= n");
  std::vector<int> assignment(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) assignment[static_cast<std::size_t>(i)] = static_cast<int>(i % folds);
  Rng rng(derive_seed(seed, Stream::cross_validation));
  std::shuffle(assignment.begin(), assignment.end(), rng.engine());

  Vector err = Vector::Zero(grid.size());
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < n; ++i) (assignment[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
    const Matrix zt = z(train, Eigen::all);
    const Vector yt = y(train);
    const Matrix zv = z(test, Eigen::all);
    const Vector yv = y(test);
    const Matrix g_mat = zt.transpose() * zt;
    const Vector c = zt.transpose() * yt;
    const double nt = static_cast<double>(zt.rows());
    Vector b = Vector::Zero(z.cols());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      bool converged = false;
      cd_gram(g_mat, c, grid(i) * nt, 1e-9, 100000, b, converged);
      err(i) += (yv - zv * b).squaredNorm();
    }
  }
  Eigen::Index best = 0;
  err.minCoeff(&best);
  return grid(best);
}

FeatureStatVector lasso_statistic(const MaskedDataset& masked, const Vector& y, StatMethod method,
                                  std::uint64_t seed) {
  const MaskedView& v = masked.view;
  if (!v.units.all_singletons()) throw DataError("lasso statistics need singleton units");
  if (y.size() != v.n()) throw DataError("response length does not match the masked data");
  Matrix z(v.n(), 2 * v.p());
  z << v.a, v.b;
  FeatureStatVector raw;
  if (method == StatMethod::lcd) {
    const Vector grid = lambda_grid(z, y);
    const double lambda = v.kind == MaskKind::fixed_x ? fixed_x_lambda(z, y)
                                                      : cv_lambda(z, y, grid, 5, v.seed ^ seed);
    raw = lcd(lasso_fit(z, y, lambda));
  } else if (method == StatMethod::lsm) {
    raw = lsm(lambda_entry_path(z, y, lambda_grid(z, y)));
  } else {
    throw ConfigError("lasso_statistic handles lcd and lsm only");
  }
  FeatureStatVector out = finalize_ties(raw.w, method, v.seed);
  out.w = orient_slots(out.w, masked);
  return out;
}

}  // namespace kmlr
