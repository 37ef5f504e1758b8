#include <algorithm>
#include <cmath>
#include <limits>

#include "kmlr/errors.hpp"
#include "kmlr/gibbs_mlr.hpp"
#include "kmlr/truncnorm.hpp"

namespace kmlr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

std::size_t draw_categorical_log(Rng& rng, const std::vector<double>& logw) {
  const double total = log_sum_exp(logw);
  double u = rng.uniform();
  for (std::size_t k = 0; k < logw.size(); ++k) {
    u -= std::exp(logw[k] - total);
    if (u <= 0.0) return k;
  }
  // Rounding left a sliver of mass; return the last supported category.
  for (std::size_t k = logw.size(); k-- > 0;) {
    if (logw[k] > kNegInf) return k;
  }
  return 0;
}

}  // namespace

ModelXSampler::ModelXSampler(const MaskedView& view, const PriorConfig& prior, bool probit,
                             std::uint64_t seed)
    : view_(view), prior_(prior), probit_(probit), oracle_(prior.point_mass.has_value()), rng_(seed) {
  if (view.kind != MaskKind::model_x) throw DataError("model-X sampler needs model-X masked data");
  prior_.validate();
  if (probit_ && view.response_kind != ResponseKind::binary) {
    throw DataError("probit sampler needs a binary response");
  }
  if (!probit_ && view.response_kind != ResponseKind::continuous) {
    throw DataError("Gaussian sampler needs a continuous response; use the probit variant");
  }
  if (oracle_ && prior_.basis != BasisKind::identity) {
    throw ConfigError("the oracle statistic supports the identity basis only");
  }
  basis_ = build_basis(view, prior_.basis, prior_.knots);
  const int m = num_units();
  const int slabs = prior_.num_slabs();
  const Eigen::Index n = view.n();

  x_bits_.resize(static_cast<std::size_t>(m));
  for (auto& b : x_bits_) b = rng_.bernoulli(0.5) ? 1 : 0;
  labels_.assign(static_cast<std::size_t>(m), 0);
  beta_.resize(static_cast<std::size_t>(m));

  if (oracle_) {
    const Vector& truth = prior_.point_mass->beta;
    if (truth.size() != view.p()) throw ConfigError("oracle beta length does not match p");
    for (int u = 0; u < m; ++u) {
      const auto& cols = view.units[u];
      Vector b(static_cast<Eigen::Index>(cols.size()));
      for (std::size_t k = 0; k < cols.size(); ++k) b(static_cast<Eigen::Index>(k)) = truth(cols[k]);
      beta_[static_cast<std::size_t>(u)] = b;
      labels_[static_cast<std::size_t>(u)] = b.isZero(0.0) ? 0 : 1;
    }
    sigma2_ = prior_.point_mass->sigma2;
    tau2_.assign(static_cast<std::size_t>(slabs), 0.0);
    weights_.assign(static_cast<std::size_t>(slabs + 1), 0.0);
  } else {
    sigma2_ = probit_ ? 1.0
                      : (prior_.fixed_sigma2 ? *prior_.fixed_sigma2
                                             : rng_.inv_gamma(prior_.sigma2_shape, prior_.sigma2_rate));
    if (prior_.fixed_tau2) {
      tau2_ = *prior_.fixed_tau2;
    } else {
      tau2_.resize(static_cast<std::size_t>(slabs));
      for (int k = 0; k < slabs; ++k) {
        const auto& c = prior_.mixture[static_cast<std::size_t>(k)];
        tau2_[static_cast<std::size_t>(k)] = rng_.inv_gamma(c.shape, c.rate);
      }
    }
    weights_ = prior_.fixed_weights ? *prior_.fixed_weights : draw_weights();
    for (int u = 0; u < m; ++u) {
      std::vector<double> logw(weights_.size());
      for (std::size_t k = 0; k < weights_.size(); ++k) logw[k] = safe_log(weights_[k]);
      const int lab = static_cast<int>(draw_categorical_log(rng_, logw));
      labels_[static_cast<std::size_t>(u)] = lab;
      Vector b = Vector::Zero(basis_[static_cast<std::size_t>(u)].dim());
      if (lab > 0) {
        const double sd = std::sqrt(tau2_[static_cast<std::size_t>(lab - 1)]);
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng_.normal(0.0, sd);
      }
      beta_[static_cast<std::size_t>(u)] = b;
    }
  }

  response_ = view.y;
  if (probit_) {
    latent_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) latent_(i) = view.y(i) > 0.5 ? 0.5 : -0.5;
    response_ = latent_;
  }
  resync_residual();
}

Vector ModelXSampler::fitted() const {
  Vector f = Vector::Zero(view_.n());
  for (int u = 0; u < num_units(); ++u) {
    const auto& b = beta_[static_cast<std::size_t>(u)];
    if (b.isZero(0.0)) continue;
    f.noalias() += basis_[static_cast<std::size_t>(u)].phi[x_bit(u) ? 0 : 1] * b;
  }
  return f;
}

Vector ModelXSampler::residual_from_scratch() const {
  Vector r = response_ - fitted();
  r.array() -= intercept_;
  return r;
}

void ModelXSampler::resync_residual() { r_ = residual_from_scratch(); }

Vector ModelXSampler::residual_without(int u) const {
  const auto& b = beta_[static_cast<std::size_t>(u)];
  if (b.isZero(0.0)) return r_;
  return r_ + basis_[static_cast<std::size_t>(u)].phi[x_bit(u) ? 0 : 1] * b;
}

std::vector<double> ModelXSampler::slab_log_bf(int u, int side, const Vector& r_minus) const {
  const UnitBasis& ub = basis_[static_cast<std::size_t>(u)];
  const Vector w = ub.eigvec[side].transpose() * (ub.phi[side].transpose() * r_minus);
  const Vector& lam = ub.eigval[side];
  std::vector<double> out(tau2_.size());
  for (std::size_t k = 0; k < tau2_.size(); ++k) {
    const double t = tau2_[k] / sigma2_;
    double l = 0.0;
    if (t > 0.0) {
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double den = 1.0 + t * lam(i);
        l += -0.5 * std::log1p(t * lam(i)) + 0.5 * t * w(i) * w(i) / (sigma2_ * den);
      }
    }
    out[k] = l;
  }
  return out;
}

double ModelXSampler::log_marginal(int u, int side, const Vector& r_minus) const {
  const auto bf = slab_log_bf(u, side, r_minus);
  std::vector<double> terms(bf.size() + 1);
  terms[0] = safe_log(weights_[0]);
  for (std::size_t k = 0; k < bf.size(); ++k) terms[k + 1] = safe_log(weights_[k + 1]) + bf[k];
  return log_sum_exp(terms);
}

double ModelXSampler::x_log_odds(int u) const {
  if (oracle_) return x_log_odds_unmarginalized(u);
  const Vector r_minus = residual_without(u);
  return log_marginal(u, 0, r_minus) - log_marginal(u, 1, r_minus);
}

double ModelXSampler::x_log_odds_unmarginalized(int u) const {
  const auto& b = beta_[static_cast<std::size_t>(u)];
  if (b.isZero(0.0)) return 0.0;
  const UnitBasis& ub = basis_[static_cast<std::size_t>(u)];
  const Vector r_minus = residual_without(u);
  const double ra = (r_minus - ub.phi[0] * b).squaredNorm();
  const double rb = (r_minus - ub.phi[1] * b).squaredNorm();
  return (rb - ra) / (2.0 * sigma2_);
}

double ModelXSampler::resample_x(int u, bool marginalize) {
  const double eta = marginalize ? x_log_odds(u) : x_log_odds_unmarginalized(u);
  if (!std::isfinite(eta)) {
    throw NumericalError("non-finite log-odds for unit " + std::to_string(u) +
                         " (sigma2 = " + std::to_string(sigma2_) + ")");
  }
  const std::uint8_t bit = rng_.uniform() < sigmoid(eta) ? 1 : 0;
  auto& cur = x_bits_[static_cast<std::size_t>(u)];
  if (bit != cur) {
    const auto& b = beta_[static_cast<std::size_t>(u)];
    if (!b.isZero(0.0)) {
      const UnitBasis& ub = basis_[static_cast<std::size_t>(u)];
      r_.noalias() += ub.phi[cur ? 0 : 1] * b;
      r_.noalias() -= ub.phi[bit ? 0 : 1] * b;
    }
    cur = bit;
  }
  return eta;
}

double ModelXSampler::gamma_log_odds(int u) const {
  const Vector r_minus = residual_without(u);
  const auto bf = slab_log_bf(u, x_bit(u) ? 0 : 1, r_minus);
  std::vector<double> slab(bf.size());
  for (std::size_t k = 0; k < bf.size(); ++k) slab[k] = safe_log(weights_[k + 1]) + bf[k];
  return safe_log(weights_[0]) - log_sum_exp(slab);
}

void ModelXSampler::update_gamma_beta(int u) {
  if (oracle_) return;
  const int side = x_bit(u) ? 0 : 1;
  const Vector r_minus = residual_without(u);
  const UnitBasis& ub = basis_[static_cast<std::size_t>(u)];
  const auto bf = slab_log_bf(u, side, r_minus);
  std::vector<double> logw(bf.size() + 1);
  logw[0] = safe_log(weights_[0]);
  for (std::size_t k = 0; k < bf.size(); ++k) logw[k + 1] = safe_log(weights_[k + 1]) + bf[k];
  const int lab = static_cast<int>(draw_categorical_log(rng_, logw));
  labels_[static_cast<std::size_t>(u)] = lab;
  Vector& b = beta_[static_cast<std::size_t>(u)];
  if (lab == 0 || tau2_[static_cast<std::size_t>(lab - 1)] <= 0.0) {
    b.setZero();
    r_ = r_minus;
    return;
  }
  // beta | rest ~ N(tau2 Q^-1 Phi'r / sigma2, tau2 Q^-1), Q = I + (tau2/sigma2) Phi'Phi.
  const double tau2 = tau2_[static_cast<std::size_t>(lab - 1)];
  const double t = tau2 / sigma2_;
  const Matrix& v = ub.eigvec[side];
  const Vector& lam = ub.eigval[side];
  const Vector w = v.transpose() * (ub.phi[side].transpose() * r_minus);
  Vector coef(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double den = 1.0 + t * lam(i);
    coef(i) = t * w(i) / den + std::sqrt(tau2 / den) * rng_.normal();
  }
  b = v * coef;
  r_ = r_minus - ub.phi[side] * b;
}

double ModelXSampler::draw_sigma2() {
  const double shape = prior_.sigma2_shape + 0.5 * static_cast<double>(view_.n());
  const double rate = prior_.sigma2_rate + 0.5 * r_.squaredNorm();
  sigma2_ = rng_.inv_gamma(shape, rate);
  return sigma2_;
}

std::vector<double> ModelXSampler::draw_tau2() {
  const int slabs = prior_.num_slabs();
  std::vector<double> dims(static_cast<std::size_t>(slabs), 0.0), ss(static_cast<std::size_t>(slabs), 0.0);
  for (int u = 0; u < num_units(); ++u) {
    const int lab = labels_[static_cast<std::size_t>(u)];
    if (lab == 0) continue;
    dims[static_cast<std::size_t>(lab - 1)] += static_cast<double>(beta_[static_cast<std::size_t>(u)].size());
    ss[static_cast<std::size_t>(lab - 1)] += beta_[static_cast<std::size_t>(u)].squaredNorm();
  }
  tau2_.resize(static_cast<std::size_t>(slabs));
  for (int k = 0; k < slabs; ++k) {
    const auto& c = prior_.mixture[static_cast<std::size_t>(k)];
    tau2_[static_cast<std::size_t>(k)] =
        rng_.inv_gamma(c.shape + 0.5 * dims[static_cast<std::size_t>(k)],
                       c.rate + 0.5 * ss[static_cast<std::size_t>(k)]);
  }
  return tau2_;
}

std::vector<double> ModelXSampler::draw_weights() {
  const int slabs = prior_.num_slabs();
  std::vector<double> counts(static_cast<std::size_t>(slabs + 1), 0.0);
  for (int lab : labels_) counts[static_cast<std::size_t>(lab)] += 1.0;
  double alpha_total = 0.0;
  for (const auto& c : prior_.mixture) alpha_total += c.weight_alpha;
  std::vector<double> g(counts.size());
  double total = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double conc = k == 0 ? prior_.sparsity_a
                               : prior_.sparsity_b * prior_.mixture[k - 1].weight_alpha / alpha_total;
    g[k] = rng_.gamma(conc + counts[k]);
    total += g[k];
  }
  for (auto& v : g) v /= total;
  weights_ = g;
  return weights_;
}

void ModelXSampler::refresh_latent() {
  if (!probit_) return;
  const Eigen::Index n = view_.n();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = response_(i) - r_(i);
    const double fresh = truncnorm_sign(rng_, mean, view_.y(i) > 0.5);
    r_(i) += fresh - response_(i);
    response_(i) = fresh;
  }
  latent_ = response_;
  // Flat prior on the intercept.
  const Vector r_plus = r_.array() + intercept_;
  intercept_ = r_plus.mean() + rng_.normal() / std::sqrt(static_cast<double>(n));
  r_ = r_plus.array() - intercept_;
}

void ModelXSampler::update_hyperparameters() {
  if (oracle_) return;
  if (!probit_ && !prior_.fixed_sigma2) draw_sigma2();
  if (!prior_.fixed_tau2) draw_tau2();
  if (!prior_.fixed_weights) draw_weights();
}

void ModelXSampler::sweep(Eigen::Ref<Vector> eta, bool marginalize) {
  refresh_latent();
  for (int u = 0; u < num_units(); ++u) {
    eta(u) = resample_x(u, marginalize);
    update_gamma_beta(u);
  }
  update_hyperparameters();
}

void ModelXSampler::set_state(const std::vector<std::uint8_t>& x_bits, const std::vector<int>& labels,
                              const std::vector<Vector>& beta, double sigma2,
                              const std::vector<double>& tau2, const std::vector<double>& weights) {
  const auto m = static_cast<std::size_t>(num_units());
  if (x_bits.size() != m || labels.size() != m || beta.size() != m) {
    throw DataError("set_state: per-unit vectors have the wrong length");
  }
  if (tau2.size() != static_cast<std::size_t>(prior_.num_slabs()) || weights.size() != tau2.size() + 1) {
    throw DataError("set_state: hyperparameter vectors have the wrong length");
  }
  for (std::size_t u = 0; u < m; ++u) {
    if (beta[u].size() != basis_[u].dim()) throw DataError("set_state: beta block has the wrong size");
  }
  x_bits_ = x_bits;
  labels_ = labels;
  beta_ = beta;
  sigma2_ = sigma2;
  tau2_ = tau2;
  weights_ = weights;
  resync_residual();
}

}  // namespace kmlr
