#include <algorithm>
#include <cmath>
#include <limits>

#include "kmlr/errors.hpp"
#include "kmlr/gibbs_mlr.hpp"

namespace kmlr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

}  // namespace

FixedXSampler::FixedXSampler(const MaskedView& view, const PriorConfig& prior, std::uint64_t seed)
    : view_(view), prior_(prior), oracle_(prior.point_mass.has_value()), rng_(seed) {
  if (view.kind != MaskKind::fixed_x) throw DataError("fixed-X sampler needs fixed-X masked data");
  prior_.validate();
  if (prior_.basis != BasisKind::identity) throw ConfigError("fixed-X sampler supports the identity basis only");
  const Eigen::Index p = view.xi.size();
  sigma_ = 0.5 * (view.gram + view.gram.transpose());
  s_diag_ = view.s.diagonal();
  a_ = sigma_;
  a_.diagonal() -= 0.5 * s_diag_;
  a_llt_.compute(a_);
  if (a_llt_.info() != Eigen::Success) {
    throw NumericalError("Sigma - S/2 is not positive definite; 2 Sigma >= S is violated upstream");
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(sigma_(j, j) > 0.0)) throw DataError("Sigma has a non-positive diagonal entry");
  }

  const int slabs = prior_.num_slabs();
  sign_.resize(static_cast<std::size_t>(p));
  for (auto& b : sign_) b = rng_.bernoulli(0.5) ? 1 : 0;
  labels_.assign(static_cast<std::size_t>(p), 0);
  beta_ = Vector::Zero(p);
  if (oracle_) {
    if (prior_.point_mass->beta.size() != p) throw ConfigError("oracle beta length does not match p");
    beta_ = prior_.point_mass->beta;
    sigma2_ = prior_.point_mass->sigma2;
    tau2_.assign(static_cast<std::size_t>(slabs), 0.0);
    weights_.assign(static_cast<std::size_t>(slabs + 1), 0.0);
  } else {
    sigma2_ = prior_.fixed_sigma2 ? *prior_.fixed_sigma2
                                  : rng_.inv_gamma(prior_.sigma2_shape, prior_.sigma2_rate);
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
    for (Eigen::Index j = 0; j < p; ++j) {
      double u = rng_.uniform();
      int lab = 0;
      for (std::size_t k = 0; k < weights_.size(); ++k) {
        u -= weights_[k];
        if (u <= 0.0) {
          lab = static_cast<int>(k);
          break;
        }
        lab = static_cast<int>(k);
      }
      labels_[static_cast<std::size_t>(j)] = lab;
      if (lab > 0) beta_(j) = rng_.normal(0.0, std::sqrt(tau2_[static_cast<std::size_t>(lab - 1)]));
    }
  }
  refresh_xty();
}

void FixedXSampler::refresh_xty() {
  const Eigen::Index p = view_.xi.size();
  xty_.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sign = sign_[static_cast<std::size_t>(j)] ? 1.0 : -1.0;
    xty_(j) = view_.xi(j) + 0.5 * sign * s_diag_(j) * view_.abs_beta_tilde(j);
  }
  sigma_beta_ = sigma_ * beta_;
}

double FixedXSampler::u_value(int j, double sign) const {
  return view_.xi(j) + 0.5 * sign * s_diag_(j) * view_.abs_beta_tilde(j) - sigma_beta_(j) +
         sigma_(j, j) * beta_(j);
}

double FixedXSampler::log_marginal(int j, double u) const {
  std::vector<double> terms(weights_.size());
  terms[0] = safe_log(weights_[0]);
  const double sjj = sigma_(j, j);
  for (std::size_t k = 1; k < weights_.size(); ++k) {
    const double t = tau2_[k - 1] / sigma2_;
    const double den = 1.0 + t * sjj;
    terms[k] = safe_log(weights_[k]) - 0.5 * std::log1p(t * sjj) + t * u * u / (2.0 * sigma2_ * den);
  }
  return log_sum_exp(terms);
}

double FixedXSampler::sign_log_odds(int j) const {
  if (oracle_) return sign_log_odds_unmarginalized(j);
  return log_marginal(j, u_value(j, 1.0)) - log_marginal(j, u_value(j, -1.0));
}

double FixedXSampler::sign_log_odds_unmarginalized(int j) const {
  return s_diag_(j) * view_.abs_beta_tilde(j) * beta_(j) / sigma2_;
}

double FixedXSampler::resample_sign(int j, bool marginalize) {
  const double eta = marginalize ? sign_log_odds(j) : sign_log_odds_unmarginalized(j);
  if (!std::isfinite(eta)) {
    throw NumericalError("non-finite sign log-odds for feature " + std::to_string(j));
  }
  const std::uint8_t bit = rng_.uniform() < sigmoid(eta) ? 1 : 0;
  if (bit != sign_[static_cast<std::size_t>(j)]) {
    sign_[static_cast<std::size_t>(j)] = bit;
    const double sign = bit ? 1.0 : -1.0;
    xty_(j) = view_.xi(j) + 0.5 * sign * s_diag_(j) * view_.abs_beta_tilde(j);
  }
  return eta;
}

std::vector<double> FixedXSampler::label_probabilities(int j) const {
  const double u = xty_(j) - sigma_beta_(j) + sigma_(j, j) * beta_(j);
  const double sjj = sigma_(j, j);
  std::vector<double> logw(weights_.size());
  logw[0] = safe_log(weights_[0]);
  for (std::size_t k = 1; k < weights_.size(); ++k) {
    const double t = tau2_[k - 1] / sigma2_;
    logw[k] = safe_log(weights_[k]) - 0.5 * std::log1p(t * sjj) + t * u * u / (2.0 * sigma2_ * (1.0 + t * sjj));
  }
  const double total = log_sum_exp(logw);
  if (!std::isfinite(total)) throw NumericalError("non-finite mixture weights");
  std::vector<double> probs(logw.size());
  for (std::size_t k = 0; k < logw.size(); ++k) probs[k] = std::exp(logw[k] - total);
  return probs;
}

void FixedXSampler::update_label_beta(int j) {
  if (oracle_) return;
  const auto probs = label_probabilities(j);
  double u01 = rng_.uniform();
  int lab = static_cast<int>(probs.size()) - 1;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    u01 -= probs[k];
    if (u01 <= 0.0) {
      lab = static_cast<int>(k);
      break;
    }
  }
  labels_[static_cast<std::size_t>(j)] = lab;
  const double old = beta_(j);
  double fresh = 0.0;
  if (lab > 0) {
    const double tau2 = tau2_[static_cast<std::size_t>(lab - 1)];
    const double sjj = sigma_(j, j);
    const double u = xty_(j) - sigma_beta_(j) + sjj * old;
    const double den = sigma2_ + tau2 * sjj;
    fresh = tau2 * u / den + std::sqrt(tau2 * sigma2_ / den) * rng_.normal();
  }
  if (fresh != old) {
    sigma_beta_.noalias() += sigma_.col(j) * (fresh - old);
    beta_(j) = fresh;
  }
}

double FixedXSampler::sigma2_shape() const {
  return prior_.sigma2_shape + static_cast<double>(view_.xi.size());
}

double FixedXSampler::sigma2_rate() const {
  const Vector resid = view_.xi - a_ * beta_;
  const double q1 = resid.dot(a_llt_.solve(resid));
  double q2 = 0.0;
  for (Eigen::Index j = 0; j < beta_.size(); ++j) {
    const double sign = sign_[static_cast<std::size_t>(j)] ? 1.0 : -1.0;
    const double diff = sign * view_.abs_beta_tilde(j) - beta_(j);
    q2 += s_diag_(j) * diff * diff;
  }
  return prior_.sigma2_rate + 0.5 * (q1 + 0.5 * q2);
}

double FixedXSampler::draw_sigma2() {
  sigma2_ = rng_.inv_gamma(sigma2_shape(), sigma2_rate());
  return sigma2_;
}

std::vector<double> FixedXSampler::draw_tau2() {
  const int slabs = prior_.num_slabs();
  std::vector<double> cnt(static_cast<std::size_t>(slabs), 0.0), ss(static_cast<std::size_t>(slabs), 0.0);
  for (Eigen::Index j = 0; j < beta_.size(); ++j) {
    const int lab = labels_[static_cast<std::size_t>(j)];
    if (lab == 0) continue;
    cnt[static_cast<std::size_t>(lab - 1)] += 1.0;
    ss[static_cast<std::size_t>(lab - 1)] += beta_(j) * beta_(j);
  }
  tau2_.resize(static_cast<std::size_t>(slabs));
  for (int k = 0; k < slabs; ++k) {
    const auto& c = prior_.mixture[static_cast<std::size_t>(k)];
    tau2_[static_cast<std::size_t>(k)] = rng_.inv_gamma(c.shape + 0.5 * cnt[static_cast<std::size_t>(k)],
                                                        c.rate + 0.5 * ss[static_cast<std::size_t>(k)]);
  }
  return tau2_;
}

std::vector<double> FixedXSampler::draw_weights() {
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

void FixedXSampler::update_hyperparameters() {
  if (oracle_) return;
  if (!prior_.fixed_sigma2) draw_sigma2();
  if (!prior_.fixed_tau2) draw_tau2();
  if (!prior_.fixed_weights) draw_weights();
}

void FixedXSampler::sweep(Eigen::Ref<Vector> eta, bool marginalize) {
  for (int j = 0; j < num_units(); ++j) {
    eta(j) = resample_sign(j, marginalize);
    update_label_beta(j);
  }
  update_hyperparameters();
  sigma_beta_ = sigma_ * beta_;
}

void FixedXSampler::set_state(const std::vector<std::uint8_t>& signs, const std::vector<int>& labels,
                              const Vector& beta, double sigma2, const std::vector<double>& tau2,
                              const std::vector<double>& weights) {
  const auto p = static_cast<std::size_t>(num_units());
  if (signs.size() != p || labels.size() != p || static_cast<std::size_t>(beta.size()) != p) {
    throw DataError("set_state: per-feature vectors have the wrong length");
  }
  if (tau2.size() != static_cast<std::size_t>(prior_.num_slabs()) || weights.size() != tau2.size() + 1) {
    throw DataError("set_state: hyperparameter vectors have the wrong length");
  }
  sign_ = signs;
  labels_ = labels;
  beta_ = beta;
  sigma2_ = sigma2;
  tau2_ = tau2;
  weights_ = weights;
  refresh_xty();
}

}  // namespace kmlr
