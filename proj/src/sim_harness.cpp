#include "kmlr/sim_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "kmlr/errors.hpp"
#include "kmlr/filter.hpp"
#include "kmlr/lasso_stats.hpp"

namespace kmlr {

std::string to_string(KnockoffKind kind) {
  return kind == KnockoffKind::fixed_x ? "fixed_x" : "model_x";
}

void ExperimentConfig::validate() const {
  if (n < 1 || p < 1) throw ConfigError("n and p must be positive");
  if (!(sparsity > 0.0 && sparsity < 1.0) && sparsity != 1.0) {
    throw ConfigError("sparsity must lie in (0, 1]");
  }
  if (!(tau >= 0.0)) throw ConfigError("tau must be nonnegative");
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("q must lie in (0, 1]");
  if (n_reps < 1) throw ConfigError("n_reps must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (statistics.empty()) throw ConfigError("at least one statistic is required");
  if (knockoff == KnockoffKind::fixed_x && n < 2 * p) throw ConfigError("fixed-X knockoffs need n >= 2p");
  if (cov.kind == CovKind::ar1 && !(cov.beta_a > 0.0 && cov.beta_b > 0.0 && cov.cap > 0.0 && cov.cap < 1.0)) {
    throw ConfigError("AR(1) needs positive Beta parameters and cap in (0, 1)");
  }
  if (cov.kind == CovKind::erdos_renyi && !(cov.sparsity >= 0.0 && cov.sparsity <= 1.0)) {
    throw ConfigError("Erdos-Renyi sparsity must lie in [0, 1]");
  }
  prior.validate();
  gibbs.validate();
}

namespace {

Matrix to_correlation(const Matrix& cov) {
  const Vector inv = cov.diagonal().cwiseSqrt().cwiseInverse();
  Matrix c = inv.asDiagonal() * cov * inv.asDiagonal();
  c = (0.5 * (c + c.transpose())).eval();
  c.diagonal().setOnes();
  return c;
}

}  // namespace

Matrix ar1_sigma(int p, Rng& rng, const CovConfig& cfg, const std::optional<Vector>& rhos) {
  if (p < 1) throw ConfigError("p must be positive");
  Vector rho(std::max(p - 1, 0));
  if (rhos) {
    if (rhos->size() != p - 1) throw ConfigError("ar1_sigma: need p - 1 correlations");
    rho = *rhos;
  } else {
    for (Eigen::Index j = 0; j < rho.size(); ++j) rho(j) = std::min(cfg.cap, rng.beta(cfg.beta_a, cfg.beta_b));
  }
  Vector var(p);
  var(0) = cfg.init_variance;
  for (int j = 1; j < p; ++j) var(j) = rho(j - 1) * rho(j - 1) * var(j - 1) + 1.0;
  Matrix cov(p, p);
  for (int i = 0; i < p; ++i) {
    cov(i, i) = var(i);
    double prod = 1.0;
    for (int j = i + 1; j < p; ++j) {
      prod *= rho(j - 1);
      cov(i, j) = cov(j, i) = prod * var(i);
    }
  }
  return to_correlation(cov);
}

Matrix er_sigma(int p, Rng& rng, double sparsity) {
  if (p < 2) throw ConfigError("er_sigma needs p >= 2");
  Matrix v = Matrix::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j) {
      if (i == j || rng.uniform() < sparsity) continue;
      const double mag = 0.1 + 0.9 * rng.uniform();
      v(i, j) = rng.bernoulli(0.5) ? mag : -mag;
    }
  }
  Matrix sym = v + v.transpose();
  const double lam = min_eigenvalue(sym);
  sym.diagonal().array() += 0.1 - lam;
  return to_correlation(sym);
}

Matrix equicorrelated_sigma(int p, double rho) {
  if (p < 1) throw ConfigError("p must be positive");
  if (!(rho > -1.0 / std::max(p - 1, 1) && rho < 1.0)) throw ConfigError("equicorrelation outside the PD range");
  Matrix s = Matrix::Constant(p, p, rho);
  s.diagonal().setOnes();
  return s;
}

Matrix make_sigma(int p, Rng& rng, const CovConfig& cfg) {
  switch (cfg.kind) {
    case CovKind::ar1: return ar1_sigma(p, rng, cfg);
    case CovKind::erdos_renyi: return er_sigma(p, rng, cfg.sparsity);
    case CovKind::equicorrelated: return equicorrelated_sigma(p, cfg.rho);
  }
  throw ConfigError("unknown covariance kind");
}

Instance sample_instance(const ExperimentConfig& cfg, const Matrix& sigma, int rep) {
  Rng rng(derive_seed(cfg.seed, Stream::instance, static_cast<std::uint64_t>(rep)));
  const int n = cfg.n, p = cfg.p;
  Instance inst;
  const Matrix l = cholesky_lower(sigma);
  Matrix z(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) z(i, j) = rng.normal();
  inst.x = z * l.transpose();

  // tau = 0 is the global null: no feature carries signal.
  const int k = cfg.tau > 0.0 ? static_cast<int>(std::lround(cfg.sparsity * p)) : 0;
  std::vector<int> idx(static_cast<std::size_t>(p));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const auto pick = static_cast<std::size_t>(i) + rng.index(static_cast<std::size_t>(p - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[pick]);
  }
  inst.nonnull.assign(idx.begin(), idx.begin() + k);
  std::sort(inst.nonnull.begin(), inst.nonnull.end());
  inst.beta = Vector::Zero(p);
  for (int j : inst.nonnull) {
    double b;
    if (cfg.coef_dist == CoefDist::uniform) {
      b = cfg.tau * (0.5 + 0.5 * rng.uniform());
      if (rng.bernoulli(0.5)) b = -b;
    } else {
      const double e = rng.exponential(1.0) * cfg.tau;
      b = rng.bernoulli(0.5) ? e : -e;
    }
    inst.beta(j) = b;
  }

  Vector mean;
  switch (cfg.response) {
    case ResponseModel::linear:
    case ResponseModel::logistic:
      mean = inst.x * inst.beta;
      break;
    case ResponseModel::gam: {
      Matrix h = inst.x;
      for (Eigen::Index i = 0; i < h.size(); ++i) {
        double& v = h.data()[i];
        switch (cfg.gam_link) {
          case GamLink::sin: v = std::sin(v); break;
          case GamLink::cos: v = std::cos(v); break;
          case GamLink::quadratic: v = v * v; break;
          case GamLink::cubic: v = v * v * v; break;
        }
      }
      mean = h * inst.beta;
      break;
    }
  }
  inst.y.resize(n);
  if (cfg.response == ResponseModel::logistic) {
    inst.response_kind = ResponseKind::binary;
    for (int i = 0; i < n; ++i) inst.y(i) = rng.bernoulli(sigmoid(mean(i))) ? 1.0 : 0.0;
  } else {
    for (int i = 0; i < n; ++i) inst.y(i) = mean(i) + rng.normal();
  }
  return inst;
}

PreparedReplicate prepare_replicate(const ExperimentConfig& cfg, int rep) {
  PreparedReplicate out;
  Rng cov_rng(derive_seed(cfg.seed, Stream::covariance, static_cast<std::uint64_t>(rep)));
  out.sigma = make_sigma(cfg.p, cov_rng, cfg.cov);
  out.instance = sample_instance(cfg, out.sigma, rep);
  const Instance& inst = out.instance;
  SMatrixSpec spec;
  spec.method = cfg.s_method;
  const std::uint64_t ko_seed = derive_seed(cfg.seed, Stream::knockoffs, static_cast<std::uint64_t>(rep));

  if (cfg.knockoff == KnockoffKind::fixed_x) {
    out.dataset = Dataset::create(inst.x, inst.y, inst.response_kind, true);
    out.knockoffs = make_knockoffs(out.dataset.x, KnockoffKind::fixed_x, spec, ko_seed);
  } else {
    // Knockoffs are drawn on the raw scale with the true covariance; every
    // column of [X, X~] is then standardized on its own.
    const Matrix s = s_matrix(out.sigma, spec);
    Matrix xt = gaussian_mx_knockoffs(inst.x, out.sigma, s, ko_seed);
    out.dataset = Dataset::create(inst.x, inst.y, inst.response_kind, true);
    standardize_columns(xt);
    out.knockoffs.x_tilde = xt;
    out.knockoffs.sigma = out.sigma;
    out.knockoffs.s = s;
    out.knockoffs.kind = KnockoffKind::model_x_gaussian;
  }
  out.beta_standardized = inst.beta.cwiseProduct(out.dataset.column_scale);
  return out;
}

FeatureStatVector compute_statistic(const ExperimentConfig& cfg, const PreparedReplicate& rd,
                                    const MaskedDataset& masked, StatMethod method, int rep) {
  const std::uint64_t stat_seed = derive_seed(cfg.seed, Stream::gibbs, static_cast<std::uint64_t>(rep));
  GibbsConfig gcfg = cfg.gibbs;
  gcfg.seed = stat_seed;
  gcfg.threads = 1;
  switch (method) {
    case StatMethod::lcd:
    case StatMethod::lsm:
      return lasso_statistic(masked, rd.dataset.y, method, stat_seed);
    case StatMethod::mlr:
      return mlr_auto(masked, cfg.prior, gcfg).stats;
    case StatMethod::mlr_spline: {
      PriorConfig prior = cfg.prior;
      prior.basis = BasisKind::cubic_spline;
      return mlr_model_x(masked, prior, gcfg).stats;
    }
    case StatMethod::mlr_probit:
      return mlr_probit(masked, cfg.prior, gcfg).stats;
    case StatMethod::mlr_oracle: {
      if (cfg.response != ResponseModel::linear) {
        throw ConfigError("the oracle statistic is available for linear responses only");
      }
      PriorConfig truth = cfg.prior;
      truth.point_mass = PointMass{rd.beta_standardized, 1.0};
      return oracle_mlr(masked, truth, gcfg);
    }
    case StatMethod::mlr_group:
    case StatMethod::other:
      break;
  }
  throw ConfigError("statistic '" + to_string(method) + "' is not available in the harness");
}

std::vector<RepRecord> run_replicate(const ExperimentConfig& cfg, int rep) {
  std::vector<RepRecord> out;
  const std::uint64_t rep_seed = derive_seed(cfg.seed, Stream::instance, static_cast<std::uint64_t>(rep));
  auto blank = [&](StatMethod m) {
    RepRecord r;
    r.rep = rep;
    r.method = to_string(m);
    r.knockoff = to_string(cfg.knockoff);
    r.seed = rep_seed;
    return r;
  };
  PreparedReplicate rd;
  MaskedDataset masked;
  try {
    rd = prepare_replicate(cfg, rep);
    masked = mask(rd.dataset, rd.knockoffs, derive_seed(cfg.seed, Stream::mask, static_cast<std::uint64_t>(rep)));
  } catch (const std::exception& e) {
    for (StatMethod m : cfg.statistics) {
      RepRecord r = blank(m);
      r.ok = false;
      r.error = e.what();
      out.push_back(r);
    }
    return out;
  }
  for (StatMethod m : cfg.statistics) {
    RepRecord r = blank(m);
    const auto start = std::chrono::steady_clock::now();
    try {
      const FeatureStatVector w = compute_statistic(cfg, rd, masked, m, rep);
      const RejectionResult rej = threshold(w, cfg.q);
      const Score s = fdp_power(rej.rejected, rd.instance.nonnull);
      r.n_rej = s.n_rej;
      r.fdp = s.fdp;
      r.power = s.power;
      r.normalized_count = s.normalized_count;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    if (cfg.timing) {
      r.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    out.push_back(r);
  }
  return out;
}

std::vector<MethodSummary> summarize_records(const std::vector<RepRecord>& records,
                                             const std::vector<StatMethod>& methods) {
  std::vector<MethodSummary> out;
  for (StatMethod m : methods) {
    MethodSummary s;
    s.method = to_string(m);
    std::vector<double> pw, fd, ct;
    for (const auto& r : records) {
      if (r.method != s.method) continue;
      if (!r.ok) {
        ++s.failures;
        continue;
      }
      pw.push_back(r.power);
      fd.push_back(r.fdp);
      ct.push_back(r.normalized_count);
    }
    s.n_ok = static_cast<int>(pw.size());
    auto mean_se = [](const std::vector<double>& v, double& mean, double& se) {
      if (v.empty()) return;
      mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      if (v.size() < 2) return;
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    };
    mean_se(pw, s.mean_power, s.se_power);
    mean_se(fd, s.mean_fdp, s.se_fdp);
    mean_se(ct, s.mean_count, s.se_count);
    out.push_back(s);
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<RepRecord>> per_rep(static_cast<std::size_t>(cfg.n_reps));
  const int workers = std::min(cfg.threads, cfg.n_reps);
  if (workers <= 1) {
    for (int r = 0; r < cfg.n_reps; ++r) per_rep[static_cast<std::size_t>(r)] = run_replicate(cfg, r);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int r = w; r < cfg.n_reps; r += workers) per_rep[static_cast<std::size_t>(r)] = run_replicate(cfg, r);
      });
    }
    for (auto& t : pool) t.join();
  }
  ExperimentResult res;
  for (auto& v : per_rep) res.records.insert(res.records.end(), v.begin(), v.end());
  res.summary = summarize_records(res.records, cfg.statistics);
  return res;
}

}  // namespace kmlr
