#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>
#include <type_traits>

#include "kmlr/errors.hpp"
#include "kmlr/gibbs_mlr.hpp"

namespace kmlr {

void PriorConfig::validate() const {
  if (mixture.empty()) throw ConfigError("prior needs at least one slab component");
  for (const auto& c : mixture) {
    if (!(c.weight_alpha > 0.0 && c.shape > 0.0 && c.rate > 0.0)) {
      throw ConfigError("mixture weight priors, shapes and rates must be positive");
    }
  }
  if (!(sigma2_shape > 0.0 && sigma2_rate > 0.0)) throw ConfigError("sigma2 prior must have positive shape and rate");
  if (!(sparsity_a > 0.0 && sparsity_b > 0.0)) throw ConfigError("sparsity prior must have positive parameters");
  if (basis == BasisKind::cubic_spline && knots < 0) throw ConfigError("knot count must be >= 0");
  if (fixed_sigma2 && !(*fixed_sigma2 > 0.0)) throw ConfigError("fixed sigma2 must be positive");
  if (fixed_tau2) {
    if (fixed_tau2->size() != mixture.size()) throw ConfigError("fixed tau2 needs one value per slab");
    for (double t : *fixed_tau2) {
      if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("fixed tau2 values must be finite and >= 0");
    }
  }
  if (fixed_weights) {
    if (fixed_weights->size() != mixture.size() + 1) throw ConfigError("fixed weights need m + 1 entries");
    double total = 0.0;
    for (double w : *fixed_weights) {
      if (!(w >= 0.0)) throw ConfigError("fixed weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("fixed weights must sum to 1");
  }
  if (point_mass) {
    if (!(point_mass->sigma2 > 0.0)) throw ConfigError("point-mass sigma2 must be positive");
    if (!point_mass->beta.allFinite()) throw ConfigError("point-mass beta must be finite");
  }
}

void GibbsConfig::validate() const {
  if (n_sample < 1) throw ConfigError("n_sample must be at least 1");
  if (burn_in < 0) throw ConfigError("burn_in must be nonnegative");
  if (chains < 1) throw ConfigError("chains must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (resync_every < 1) throw ConfigError("resync_every must be at least 1");
}

double masked_loglik_fixed_x(const Vector& beta, const MaskedView& view) {
  if (view.kind != MaskKind::fixed_x) throw DataError("masked_loglik_fixed_x needs fixed-X masked data");
  if (beta.size() != view.xi.size()) throw DataError("beta length does not match p");
  if (!beta.allFinite()) throw DataError("beta contains non-finite values");
  Matrix a = 0.5 * (view.gram + view.gram.transpose());
  a.diagonal() -= 0.5 * view.s.diagonal();
  double value = beta.dot(view.xi) - 0.5 * beta.dot(a * beta);
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double sjj = view.s(j, j);
    value -= 0.25 * sjj * beta(j) * beta(j) - log_cosh(0.5 * beta(j) * view.abs_beta_tilde(j) * sjj);
  }
  return value;
}

FeatureStatVector finalize_w(const GibbsTrace& trace, std::uint64_t seed, StatMethod method) {
  if (trace.n_sample() < 1) throw DataError("cannot finalize an empty trace");
  const Eigen::Index m = trace.num_units();
  const Eigen::Index ns = trace.n_sample();
  Vector w(m);
  std::vector<double> pos(static_cast<std::size_t>(ns)), neg(static_cast<std::size_t>(ns));
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < ns; ++i) {
      const double e = trace.eta(i, j);
      if (!std::isfinite(e)) throw NumericalError("trace contains a non-finite log-odds");
      pos[static_cast<std::size_t>(i)] = log_sigmoid(e);
      neg[static_cast<std::size_t>(i)] = log_sigmoid(-e);
    }
    w(j) = log_sum_exp(pos) - log_sum_exp(neg);
  }
  FeatureStatVector out = finalize_ties(w, method, seed);
  Vector prob(m);
  for (Eigen::Index j = 0; j < m; ++j) prob(j) = sign_prob_from_w(std::abs(out.w(j)));
  out.posterior_sign_prob = prob;
  return out;
}

double max_split_rhat(const GibbsTrace& trace) {
  const Eigen::Index total = trace.n_sample();
  const int chains = std::max(trace.chains, 1);
  const Eigen::Index per_chain = total / chains;
  const Eigen::Index half = per_chain / 2;
  if (half < 2) return 1.0;
  double worst = 1.0;
  const int seqs = 2 * chains;
  for (Eigen::Index j = 0; j < trace.num_units(); ++j) {
    std::vector<double> means(static_cast<std::size_t>(seqs)), vars(static_cast<std::size_t>(seqs));
    for (int c = 0; c < chains; ++c) {
      for (int h = 0; h < 2; ++h) {
        const Eigen::Index start = c * per_chain + h * half;
        double mean = 0.0;
        for (Eigen::Index i = 0; i < half; ++i) mean += sigmoid(trace.eta(start + i, j));
        mean /= static_cast<double>(half);
        double var = 0.0;
        for (Eigen::Index i = 0; i < half; ++i) {
          const double d = sigmoid(trace.eta(start + i, j)) - mean;
          var += d * d;
        }
        var /= static_cast<double>(half - 1);
        means[static_cast<std::size_t>(2 * c + h)] = mean;
        vars[static_cast<std::size_t>(2 * c + h)] = var;
      }
    }
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / seqs;
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= static_cast<double>(half) / (seqs - 1);
    const double within = std::accumulate(vars.begin(), vars.end(), 0.0) / seqs;
    if (within <= 1e-300) continue;
    const double n = static_cast<double>(half);
    const double rhat = std::sqrt(((n - 1.0) / n * within + b / n) / within);
    worst = std::max(worst, rhat);
  }
  return worst;
}

namespace {

template <typename Sampler, typename Make>
GibbsTrace run_chain(const Make& make, const GibbsConfig& cfg, int chain) {
  Sampler sampler = make(derive_seed(cfg.seed, Stream::gibbs, static_cast<std::uint64_t>(chain)));
  const int m = sampler.num_units();
  GibbsTrace trace;
  trace.burn_in = cfg.burn_in;
  trace.chains = 1;
  trace.eta.resize(cfg.n_sample, m);
  trace.sign_indicators.resize(cfg.n_sample, m);
  trace.param_draws.reserve(static_cast<std::size_t>(cfg.n_sample));
  Vector eta(m);
  const int total = cfg.burn_in + cfg.n_sample;
  for (int it = 0; it < total; ++it) {
    sampler.sweep(eta, cfg.marginalize_beta_on_x_update);
    if constexpr (std::is_same_v<Sampler, ModelXSampler>) {
      if ((it + 1) % cfg.resync_every == 0) sampler.resync_residual();
    }
    if (it < cfg.burn_in) continue;
    const int row = it - cfg.burn_in;
    trace.eta.row(row) = eta.transpose();
    for (int u = 0; u < m; ++u) {
      bool bit;
      if constexpr (std::is_same_v<Sampler, ModelXSampler>) {
        bit = sampler.x_bit(u);
      } else {
        bit = sampler.sign_bit(u);
      }
      trace.sign_indicators(row, u) = bit ? 1 : 0;
    }
    ParamDraw d;
    d.sigma2 = sampler.sigma2();
    d.tau2 = sampler.tau2().empty() ? 0.0 : sampler.tau2()[0];
    d.p0 = sampler.weights().empty() ? 0.0 : sampler.weights()[0];
    trace.param_draws.push_back(d);
  }
  return trace;
}

template <typename Sampler, typename Make>
GibbsTrace run_chains(const Make& make, const GibbsConfig& cfg) {
  cfg.validate();
  std::vector<GibbsTrace> traces(static_cast<std::size_t>(cfg.chains));
  const int workers = std::min(cfg.threads, cfg.chains);
  if (workers <= 1) {
    for (int c = 0; c < cfg.chains; ++c) traces[static_cast<std::size_t>(c)] = run_chain<Sampler>(make, cfg, c);
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.chains));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int c = w; c < cfg.chains; c += workers) {
          try {
            traces[static_cast<std::size_t>(c)] = run_chain<Sampler>(make, cfg, c);
          } catch (...) {
            errors[static_cast<std::size_t>(c)] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  GibbsTrace merged;
  for (const auto& t : traces) merged.append(t);
  merged.chains = cfg.chains;
  merged.burn_in = cfg.burn_in;
  merged.validate();
  return merged;
}

MlrResult summarize(GibbsTrace trace, const GibbsConfig& cfg, std::uint64_t view_seed, StatMethod method) {
  MlrResult res;
  res.stats = finalize_w(trace, view_seed, method);
  res.max_split_rhat = max_split_rhat(trace);
  if (res.max_split_rhat > cfg.rhat_warning) {
    res.warnings.push_back("chains disagree: max split R-hat " + std::to_string(res.max_split_rhat));
  }
  res.trace = std::move(trace);
  return res;
}

StatMethod model_x_method(const PriorConfig& prior, bool probit, const MaskedView& view) {
  if (prior.point_mass) return StatMethod::mlr_oracle;
  if (probit) return StatMethod::mlr_probit;
  if (!view.units.all_singletons()) return StatMethod::mlr_group;
  if (prior.basis == BasisKind::cubic_spline) return StatMethod::mlr_spline;
  return StatMethod::mlr;
}

}  // namespace

MlrResult mlr_model_x_view(const MaskedView& view, const PriorConfig& prior, const GibbsConfig& cfg,
                           bool probit) {
  auto make = [&](std::uint64_t seed) { return ModelXSampler(view, prior, probit, seed); };
  GibbsTrace trace = run_chains<ModelXSampler>(make, cfg);
  return summarize(std::move(trace), cfg, view.seed, model_x_method(prior, probit, view));
}

MlrResult mlr_fixed_x_view(const MaskedView& view, const PriorConfig& prior, const GibbsConfig& cfg) {
  auto make = [&](std::uint64_t seed) { return FixedXSampler(view, prior, seed); };
  GibbsTrace trace = run_chains<FixedXSampler>(make, cfg);
  return summarize(std::move(trace), cfg, view.seed,
                   prior.point_mass ? StatMethod::mlr_oracle : StatMethod::mlr);
}

MlrResult mlr_model_x(const MaskedDataset& masked, const PriorConfig& prior, const GibbsConfig& cfg) {
  if (masked.view.kind != MaskKind::model_x) throw DataError("mlr_model_x needs model-X masked data");
  if (masked.view.response_kind == ResponseKind::binary) return mlr_probit(masked, prior, cfg);
  MlrResult res = mlr_model_x_view(masked.view, prior, cfg, false);
  res.stats.w = orient_slots(res.stats.w, masked);
  return res;
}

MlrResult mlr_probit(const MaskedDataset& masked, const PriorConfig& prior, const GibbsConfig& cfg) {
  if (masked.view.kind != MaskKind::model_x) throw DataError("mlr_probit needs model-X masked data");
  MlrResult res = mlr_model_x_view(masked.view, prior, cfg, true);
  res.stats.w = orient_slots(res.stats.w, masked);
  return res;
}

MlrResult mlr_group(const MaskedDataset& masked, const PriorConfig& prior, const GibbsConfig& cfg) {
  if (masked.view.kind != MaskKind::model_x) throw DataError("mlr_group needs model-X masked data");
  MlrResult res = mlr_model_x_view(masked.view, prior, cfg,
                                   masked.view.response_kind == ResponseKind::binary);
  res.stats.w = orient_slots(res.stats.w, masked);
  return res;
}

MlrResult mlr_fixed_x(const MaskedDataset& masked, const PriorConfig& prior, const GibbsConfig& cfg) {
  if (masked.view.kind != MaskKind::fixed_x) throw DataError("mlr_fixed_x needs fixed-X masked data");
  MlrResult res = mlr_fixed_x_view(masked.view, prior, cfg);
  res.stats.w = orient_signs(res.stats.w, masked);
  return res;
}

MlrResult mlr_auto(const MaskedDataset& masked, const PriorConfig& prior, const GibbsConfig& cfg) {
  if (masked.view.kind == MaskKind::fixed_x) return mlr_fixed_x(masked, prior, cfg);
  return mlr_model_x(masked, prior, cfg);
}

FeatureStatVector oracle_mlr(const MaskedDataset& masked, const PriorConfig& truth, const GibbsConfig& cfg) {
  if (!truth.point_mass) throw ConfigError("oracle statistic needs the true coefficients");
  const MaskedView& v = masked.view;
  if (v.kind == MaskKind::fixed_x) {
    const PointMass& pm = *truth.point_mass;
    if (pm.beta.size() != v.xi.size()) throw ConfigError("oracle beta length does not match p");
    Vector w(pm.beta.size());
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      w(j) = v.s(j, j) * v.abs_beta_tilde(j) * pm.beta(j) / pm.sigma2;
    }
    FeatureStatVector out = finalize_ties(w, StatMethod::mlr_oracle, v.seed);
    Vector prob(w.size());
    for (Eigen::Index j = 0; j < w.size(); ++j) prob(j) = sign_prob_from_w(std::abs(out.w(j)));
    out.posterior_sign_prob = prob;
    out.w = orient_signs(out.w, masked);
    return out;
  }
  MlrResult res = mlr_model_x_view(v, truth, cfg, false);
  res.stats.w = orient_slots(res.stats.w, masked);
  return res.stats;
}

}  // namespace kmlr
