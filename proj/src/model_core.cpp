#include "kmlr/model_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kmlr/errors.hpp"
#include "kmlr/rng.hpp"

namespace kmlr {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// Lexicographic comparison of two column blocks, column-major.
int compare_blocks(const Matrix& x, const Matrix& y, const std::vector<int>& cols) {
  for (int j : cols) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double a = x(i, j);
      const double b = y(i, j);
      if (a < b) return -1;
      if (a > b) return 1;
    }
  }
  return 0;
}

}  // namespace

std::pair<Vector, Vector> standardize_columns(Matrix& x) {
  Vector center = x.colwise().mean().transpose();
  Vector scale(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    x.col(j).array() -= center(j);
    const double norm = x.col(j).norm();
    if (!(norm > 0.0)) {
      throw DataError("column " + std::to_string(j) + " is constant and cannot be standardized");
    }
    x.col(j) /= norm;
    scale(j) = norm;
  }
  return {center, scale};
}

Dataset Dataset::create(Matrix x, Vector y, ResponseKind kind, bool standardize) {
  Dataset d;
  d.x = std::move(x);
  d.y = std::move(y);
  d.response_kind = kind;
  d.column_center = Vector::Zero(d.x.cols());
  d.column_scale = Vector::Ones(d.x.cols());
  d.validate();
  if (standardize) {
    auto [center, scale] = standardize_columns(d.x);
    d.column_center = center;
    d.column_scale = scale;
    if (kind == ResponseKind::continuous) d.y.array() -= d.y.mean();
  }
  return d;
}

void Dataset::validate() const {
  if (x.rows() < 1 || x.cols() < 1) throw DataError("dataset needs n >= 1 and p >= 1");
  if (y.size() != x.rows()) {
    throw DataError("response length " + std::to_string(y.size()) + " does not match n = " +
                    std::to_string(x.rows()));
  }
  if (!all_finite(x) || !y.allFinite()) throw DataError("dataset contains non-finite values");
  if (response_kind == ResponseKind::binary) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y(i) != 0.0 && y(i) != 1.0) {
        throw DataError("binary response has value outside {0, 1} at row " + std::to_string(i));
      }
    }
  }
}

Partition::Partition(std::vector<std::vector<int>> groups) : groups_(std::move(groups)) {
  num_features_ = 0;
  for (const auto& g : groups_) num_features_ += static_cast<int>(g.size());
}

Partition Partition::singletons(int p) {
  std::vector<std::vector<int>> g(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) g[static_cast<std::size_t>(j)] = {j};
  return Partition(std::move(g));
}

Partition Partition::from_labels(const std::vector<int>& labels) {
  int m = 0;
  for (int l : labels) {
    if (l < 0) throw DataError("group labels must be nonnegative");
    m = std::max(m, l + 1);
  }
  std::vector<std::vector<int>> g(static_cast<std::size_t>(m));
  for (std::size_t j = 0; j < labels.size(); ++j) {
    g[static_cast<std::size_t>(labels[j])].push_back(static_cast<int>(j));
  }
  for (int k = 0; k < m; ++k) {
    if (g[static_cast<std::size_t>(k)].empty()) {
      throw DataError("group label " + std::to_string(k) + " is unused");
    }
  }
  return Partition(std::move(g));
}

bool Partition::all_singletons() const {
  return std::all_of(groups_.begin(), groups_.end(), [](const auto& g) { return g.size() == 1; });
}

void Partition::validate(int p) const {
  std::vector<int> seen(static_cast<std::size_t>(p), 0);
  for (const auto& g : groups_) {
    if (g.empty()) throw DataError("partition contains an empty group");
    for (int j : g) {
      if (j < 0 || j >= p) throw DataError("partition index " + std::to_string(j) + " out of range");
      if (seen[static_cast<std::size_t>(j)]++) {
        throw DataError("feature " + std::to_string(j) + " appears in more than one group");
      }
    }
  }
  for (int j = 0; j < p; ++j) {
    if (!seen[static_cast<std::size_t>(j)]) {
      throw DataError("feature " + std::to_string(j) + " is not covered by the partition");
    }
  }
}

void KnockoffModel::validate(const Matrix& x, double tol) const {
  const Eigen::Index p = x.cols();
  if (x_tilde.rows() != x.rows() || x_tilde.cols() != p) {
    throw DataError("knockoff matrix is " + dims(x_tilde.rows(), x_tilde.cols()) +
                    ", expected " + dims(x.rows(), p));
  }
  if (sigma.rows() != p || sigma.cols() != p || s.rows() != p || s.cols() != p) {
    throw DataError("Sigma and S must be p x p");
  }
  if (groups) groups->validate(static_cast<int>(p));
  const Matrix slack = 2.0 * sigma - s;
  if (min_eigenvalue(0.5 * (slack + slack.transpose())) < -tol) {
    throw DataError("2 Sigma - S is not positive semidefinite");
  }
  if (kind == KnockoffKind::fixed_x) {
    if (max_abs(x_tilde.transpose() * x_tilde - sigma) > tol) {
      throw DataError("fixed-X Gram identity X~'X~ = Sigma violated");
    }
    if (max_abs(x.transpose() * x_tilde - (sigma - s)) > tol) {
      throw DataError("fixed-X Gram identity X'X~ = Sigma - S violated");
    }
  }
}

std::pair<Matrix, Matrix> swap_columns(const Matrix& x, const Matrix& x_tilde,
                                       const std::vector<int>& j_set) {
  if (x.rows() != x_tilde.rows() || x.cols() != x_tilde.cols()) {
    throw DataError("swap_columns: matrices differ in shape");
  }
  Matrix a = x;
  Matrix b = x_tilde;
  for (int j : j_set) {
    if (j < 0 || j >= x.cols()) throw DataError("swap index " + std::to_string(j) + " out of range");
    a.col(j) = x_tilde.col(j);
    b.col(j) = x.col(j);
  }
  return {a, b};
}

double sign_prob_from_w(double abs_w) {
  if (!std::isfinite(abs_w) || abs_w < 0.0) {
    throw DataError("sign_prob_from_w needs a finite nonnegative argument");
  }
  return sigmoid(abs_w);
}

Matrix MaskedView::unit_block(const Matrix& side, int u) const {
  const auto& cols = units[u];
  Matrix out(side.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = side.col(cols[k]);
  return out;
}

MaskedDataset mask(const Dataset& dataset, const KnockoffModel& knockoffs, std::uint64_t seed) {
  dataset.validate();
  const Matrix& x = dataset.x;
  const Matrix& xt = knockoffs.x_tilde;
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (xt.rows() != n || xt.cols() != p) {
    throw DataError("knockoff matrix is " + dims(xt.rows(), xt.cols()) + ", expected " + dims(n, p));
  }
  if (knockoffs.s.rows() != p || knockoffs.s.cols() != p) throw DataError("S must be p x p");
  if (!xt.allFinite()) throw DataError("knockoff matrix contains non-finite values");

  Partition units = knockoffs.groups ? *knockoffs.groups : Partition::singletons(static_cast<int>(p));
  units.validate(static_cast<int>(p));

  MaskedDataset out;
  MaskedView& v = out.view;
  v.units = units;
  v.response_kind = dataset.response_kind;
  v.seed = seed;
  v.a = x;
  v.b = xt;
  const int m = units.size();
  out.truth.slot_a_is_feature_.assign(static_cast<std::size_t>(m), 1);

  for (int u = 0; u < m; ++u) {
    const std::uint64_t flip = derive_seed(seed, Stream::mask, static_cast<std::uint64_t>(u)) & 1ULL;
    const int cmp = compare_blocks(x, xt, units[u]);
    // Canonical order puts the lexicographically smaller block in slot a.
    bool feature_first = cmp <= 0;
    if (flip) feature_first = !feature_first;
    out.truth.slot_a_is_feature_[static_cast<std::size_t>(u)] = feature_first ? 1 : 0;
    if (!feature_first) {
      for (int j : units[u]) {
        v.a.col(j) = xt.col(j);
        v.b.col(j) = x.col(j);
      }
    }
  }

  if (knockoffs.kind == KnockoffKind::model_x_gaussian) {
    v.kind = MaskKind::model_x;
    v.y = dataset.y;
    return out;
  }

  v.kind = MaskKind::fixed_x;
  if (!units.all_singletons()) throw DataError("fixed-X masking supports singleton units only");
  if (dataset.response_kind != ResponseKind::continuous) {
    throw DataError("fixed-X masking requires a continuous response");
  }
  const Vector sdiag = knockoffs.s.diagonal();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(sdiag(j) > 0.0)) {
      throw DataError("fixed-X masking needs S_jj > 0 (feature " + std::to_string(j) + ")");
    }
  }
  const Vector ay = v.a.transpose() * dataset.y;
  const Vector by = v.b.transpose() * dataset.y;
  v.xi = 0.5 * (ay + by);
  const Vector bt_ab = (ay - by).cwiseQuotient(sdiag);
  v.abs_beta_tilde = bt_ab.cwiseAbs();
  v.s = knockoffs.s;
  v.gram = v.a.transpose() * v.a;
  out.truth.positive_sign_is_true_.assign(static_cast<std::size_t>(p), 1);
  for (Eigen::Index j = 0; j < p; ++j) {
    const bool a_is_x = out.truth.slot_a_is_feature_[static_cast<std::size_t>(j)] != 0;
    // True beta~_j = (x_j - x~_j)'y / S_jj = +-bt_ab(j).
    bool positive = bt_ab(j) > 0.0 ? a_is_x : !a_is_x;
    if (bt_ab(j) == 0.0) positive = a_is_x;
    out.truth.positive_sign_is_true_[static_cast<std::size_t>(j)] = positive ? 1 : 0;
  }
  if (!v.xi.allFinite() || !v.abs_beta_tilde.allFinite() || !v.gram.allFinite()) {
    throw DataError("masked statistics are non-finite");
  }
  return out;
}

Vector orient_slots(const Vector& w_view, const MaskedDataset& masked) {
  const auto& bits = masked.truth.slot_a_is_feature_;
  if (w_view.size() != static_cast<Eigen::Index>(bits.size())) {
    throw DataError("statistic length does not match number of units");
  }
  Vector w = w_view;
  for (std::size_t u = 0; u < bits.size(); ++u) {
    if (!bits[u]) w(static_cast<Eigen::Index>(u)) = -w(static_cast<Eigen::Index>(u));
  }
  return w;
}

Vector orient_signs(const Vector& w_view, const MaskedDataset& masked) {
  const auto& bits = masked.truth.positive_sign_is_true_;
  if (masked.view.kind != MaskKind::fixed_x) throw DataError("orient_signs needs fixed-X masked data");
  if (w_view.size() != static_cast<Eigen::Index>(bits.size())) {
    throw DataError("statistic length does not match number of features");
  }
  Vector w = w_view;
  for (std::size_t j = 0; j < bits.size(); ++j) {
    if (!bits[j]) w(static_cast<Eigen::Index>(j)) = -w(static_cast<Eigen::Index>(j));
  }
  return w;
}

std::pair<Matrix, Matrix> unmask_model_x(const MaskedDataset& masked) {
  const MaskedView& v = masked.view;
  Matrix x = v.a;
  Matrix xt = v.b;
  for (int u = 0; u < v.num_units(); ++u) {
    if (masked.truth.slot_a_is_feature_[static_cast<std::size_t>(u)]) continue;
    for (int j : v.units[u]) {
      x.col(j) = v.b.col(j);
      xt.col(j) = v.a.col(j);
    }
  }
  return {x, xt};
}

std::pair<Vector, Vector> unmask_fixed_x(const MaskedDataset& masked) {
  const MaskedView& v = masked.view;
  if (v.kind != MaskKind::fixed_x) throw DataError("unmask_fixed_x needs fixed-X masked data");
  const Eigen::Index p = v.xi.size();
  Vector xy(p), xty(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sign = masked.truth.positive_sign_is_true_[static_cast<std::size_t>(j)] ? 1.0 : -1.0;
    const double half = 0.5 * v.s(j, j) * sign * v.abs_beta_tilde(j);
    xy(j) = v.xi(j) + half;
    xty(j) = v.xi(j) - half;
  }
  return {xy, xty};
}

std::string to_string(StatMethod method) {
  switch (method) {
    case StatMethod::lcd: return "lcd";
    case StatMethod::lsm: return "lsm";
    case StatMethod::mlr: return "mlr";
    case StatMethod::mlr_oracle: return "mlr_oracle";
    case StatMethod::mlr_spline: return "mlr_spline";
    case StatMethod::mlr_probit: return "mlr_probit";
    case StatMethod::mlr_group: return "mlr_group";
    case StatMethod::other: return "other";
  }
  return "other";
}

StatMethod stat_method_from_string(const std::string& name) {
  for (StatMethod m : {StatMethod::lcd, StatMethod::lsm, StatMethod::mlr, StatMethod::mlr_oracle,
                       StatMethod::mlr_spline, StatMethod::mlr_probit, StatMethod::mlr_group,
                       StatMethod::other}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown statistic '" + name + "'");
}

FeatureStatVector finalize_ties(Vector w, StatMethod method, std::uint64_t seed) {
  if (!w.allFinite()) throw NumericalError("feature statistics contain non-finite values");
  double smallest = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (w(j) != 0.0) smallest = std::min(smallest, std::abs(w(j)));
  }
  const double eps = std::isfinite(smallest) ? 0.5 * smallest : 1e-8;
  FeatureStatVector out;
  out.method = method;
  out.tie_broken.assign(static_cast<std::size_t>(w.size()), 0);
  Rng rng(derive_seed(seed, Stream::tie_break));
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    // One draw per coordinate keeps signs independent of where the zeros are.
    const bool positive = (rng.next_u64() >> 63) != 0;
    if (w(j) == 0.0) {
      w(j) = positive ? eps : -eps;
      out.tie_broken[static_cast<std::size_t>(j)] = 1;
    }
  }
  out.w = std::move(w);
  return out;
}

void GibbsTrace::validate() const {
  if (eta.rows() < 1) throw DataError("trace has no samples");
  if (sign_indicators.rows() != eta.rows() || sign_indicators.cols() != eta.cols()) {
    throw DataError("trace eta and sign indicators differ in shape");
  }
  if (!eta.allFinite()) throw NumericalError("trace contains non-finite log-likelihood ratios");
  for (Eigen::Index i = 0; i < sign_indicators.size(); ++i) {
    if (sign_indicators.data()[i] > 1) throw DataError("sign indicators must be 0 or 1");
  }
}

void GibbsTrace::append(const GibbsTrace& other) {
  if (eta.size() == 0) {
    *this = other;
    return;
  }
  if (other.eta.cols() != eta.cols()) throw DataError("cannot append traces with different widths");
  const Eigen::Index r0 = eta.rows();
  eta.conservativeResize(r0 + other.eta.rows(), Eigen::NoChange);
  eta.bottomRows(other.eta.rows()) = other.eta;
  sign_indicators.conservativeResize(r0 + other.eta.rows(), Eigen::NoChange);
  sign_indicators.bottomRows(other.eta.rows()) = other.sign_indicators;
  param_draws.insert(param_draws.end(), other.param_draws.begin(), other.param_draws.end());
  chains += other.chains;
}

}  // namespace kmlr
