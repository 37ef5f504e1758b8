#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "kmlr/diagnostics.hpp"
#include "kmlr/enumeration.hpp"
#include "kmlr/filter.hpp"
#include "kmlr/gibbs_mlr.hpp"
#include "kmlr/lasso_stats.hpp"
#include "kmlr/sim_harness.hpp"
#include "oracles.hpp"

using namespace kmlr;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
};

int worker_threads() {
  if (const char* env = std::getenv("KNOCKOFF_MLR_THREADS")) return std::max(1, std::atoi(env));
  return std::max(1u, std::thread::hardware_concurrency());
}

double mean_of(const std::vector<double>& v) { return oracle::mean(v); }

double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

std::vector<double> field(const ExperimentResult& res, const std::string& method, double RepRecord::*member,
                          int* failures = nullptr) {
  std::vector<double> out;
  for (const auto& r : res.records) {
    if (r.method != method) continue;
    if (!r.ok) {
      if (failures) ++*failures;
      continue;
    }
    out.push_back(r.*member);
  }
  return out;
}

PriorConfig pinned(double sigma2, double tau2, double p0) {
  PriorConfig prior;
  prior.fixed_sigma2 = sigma2;
  prior.fixed_tau2 = std::vector<double>{tau2};
  prior.fixed_weights = std::vector<double>{p0, 1.0 - p0};
  return prior;
}

GibbsConfig gibbs(int n_sample, int burn_in, int chains, std::uint64_t seed) {
  GibbsConfig g;
  g.n_sample = n_sample;
  g.burn_in = burn_in;
  g.chains = chains;
  g.seed = seed;
  return g;
}

// Posterior probability of the `a` slot (or positive sign) per unit, from the
// recorded conditional log-odds.
Vector trace_probability(const GibbsTrace& t) {
  Vector out(t.num_units());
  for (Eigen::Index j = 0; j < t.num_units(); ++j) {
    long double acc = 0.0L;
    for (Eigen::Index i = 0; i < t.n_sample(); ++i) acc += 1.0L / (1.0L + std::exp(-static_cast<long double>(t.eta(i, j))));
    out(j) = static_cast<double>(acc / static_cast<long double>(t.n_sample()));
  }
  return out;
}

// 1. FDR control over the statistic x knockoff x DGP grid.
void criterion_fdr(Outcome& o) {
  const double q = 0.2;
  for (KnockoffKind kind : {KnockoffKind::fixed_x, KnockoffKind::model_x_gaussian}) {
    for (bool null_dgp : {false, true}) {
      ExperimentConfig cfg;
      cfg.n = 200;
      cfg.p = 30;
      cfg.knockoff = kind;
      cfg.s_method = SMethod::mvr;
      cfg.tau = null_dgp ? 0.0 : 0.5;
      cfg.statistics = {StatMethod::lcd, StatMethod::lsm, StatMethod::mlr};
      cfg.q = q;
      cfg.n_reps = 500;
      cfg.seed = null_dgp ? 1001 : 1000;
      cfg.threads = worker_threads();
      const ExperimentResult res = run_experiment(cfg);
      for (const std::string method : {"lcd", "lsm", "mlr"}) {
        int failures = 0;
        const auto fdp = field(res, method, &RepRecord::fdp, &failures);
        const double m = mean_of(fdp), se = se_of(fdp);
        const bool ok = failures == 0 && fdp.size() == 500 && m <= q + 3.0 * se;
        o.pass = o.pass && ok;
        o.detail << "\n    " << to_string(kind) << (null_dgp ? " null " : " ar1  ") << method << ": FDR " << m
                 << " (se " << se << ", failures " << failures << ")" << (ok ? "" : "  <-- exceeds q + 3se");
      }
    }
  }
}

// 2. Gibbs against the exact posterior on small instances.
void criterion_enumeration(Outcome& o) {
  double worst = 0.0, lo = 1.0, hi = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const int p = 2 + inst % 4;
    const KnockoffKind kind = inst % 2 == 0 ? KnockoffKind::model_x_gaussian : KnockoffKind::fixed_x;
    ExperimentConfig cfg;
    cfg.n = 60;
    cfg.p = p;
    cfg.sparsity = 0.5;
    cfg.tau = 1.0;
    cfg.knockoff = kind;
    cfg.seed = 500 + static_cast<std::uint64_t>(inst);
    const PreparedReplicate rd = prepare_replicate(cfg, 0);
    const MaskedDataset md = mask(rd.dataset, rd.knockoffs, 900 + static_cast<std::uint64_t>(inst));
    const PriorConfig prior = pinned(1.0, 1.0, 0.5);
    const Vector exact = brute_force_posterior_view(md.view, prior);
    const GibbsConfig g = gibbs(4000, 500, 4, 70 + static_cast<std::uint64_t>(inst));
    const MlrResult res = kind == KnockoffKind::fixed_x ? mlr_fixed_x_view(md.view, prior, g)
                                                        : mlr_model_x_view(md.view, prior, g);
    const Vector est = trace_probability(res.trace);
    const double dev = (est - exact).cwiseAbs().maxCoeff();
    lo = std::min(lo, exact.minCoeff());
    hi = std::max(hi, exact.maxCoeff());
    worst = std::max(worst, dev);
    if (dev > 0.02) {
      o.pass = false;
      o.detail << "\n    instance " << inst << " (" << to_string(kind) << ", p=" << p << "): max deviation " << dev;
    }
  }
  o.detail << "\n    worst max_j |P_gibbs - P_exact| over 20 instances: " << worst << " (exact probabilities span ["
           << lo << ", " << hi << "])";
}

// 3. |W| equals the logit of the estimated sign probability.
void criterion_magnitude(Outcome& o) {
  double worst = 0.0;
  int checked = 0;
  auto check = [&](const MlrResult& res) {
    const GibbsTrace& t = res.trace;
    for (Eigen::Index j = 0; j < t.num_units(); ++j) {
      long double pos = 0.0L, neg = 0.0L;
      for (Eigen::Index i = 0; i < t.n_sample(); ++i) {
        const long double e = t.eta(i, j);
        pos += 1.0L / (1.0L + std::exp(-e));
        neg += 1.0L / (1.0L + std::exp(e));
      }
      const double expected = std::abs(static_cast<double>(std::log(pos) - std::log(neg)));
      const double got = std::abs(res.stats.w(j));
      ++checked;
      if (!res.stats.tie_broken.empty() && res.stats.tie_broken[static_cast<std::size_t>(j)]) {
        if (expected != 0.0) o.pass = false;
        continue;
      }
      worst = std::max(worst, std::abs(got - expected));
    }
  };
  for (int inst = 0; inst < 12; ++inst) {
    ExperimentConfig cfg;
    cfg.n = 100;
    cfg.p = 12;
    cfg.sparsity = 0.3;
    cfg.tau = 0.8;
    cfg.seed = 40 + static_cast<std::uint64_t>(inst);
    cfg.knockoff = inst % 3 == 0 ? KnockoffKind::fixed_x : KnockoffKind::model_x_gaussian;
    if (inst % 3 == 2) cfg.response = ResponseModel::logistic;
    const PreparedReplicate rd = prepare_replicate(cfg, 0);
    const MaskedDataset md = mask(rd.dataset, rd.knockoffs, 3);
    const GibbsConfig g = gibbs(600, 100, 2, 8 + static_cast<std::uint64_t>(inst));
    if (cfg.knockoff == KnockoffKind::fixed_x) {
      check(mlr_fixed_x_view(md.view, PriorConfig{}, g));
    } else {
      check(mlr_model_x_view(md.view, PriorConfig{}, g, cfg.response == ResponseModel::logistic));
    }
  }
  o.pass = o.pass && worst <= 1e-12;
  o.detail << "\n    " << checked << " coordinates, max ||W| - logit(P)| = " << worst;
}

// 4. Swapping a set of pairs negates exactly those statistics.
void criterion_flip_sign(Outcome& o) {
  std::mt19937_64 gen(77);
  int bad = 0, total = 0;
  const std::vector<StatMethod> methods{StatMethod::lcd, StatMethod::lsm, StatMethod::mlr, StatMethod::mlr_oracle};
  for (int s = 0; s < 100; ++s) {
    ExperimentConfig cfg;
    cfg.n = 80;
    cfg.p = 10;
    cfg.sparsity = 0.3;
    cfg.tau = 1.0;
    cfg.seed = 3000 + static_cast<std::uint64_t>(s);
    cfg.knockoff = s % 2 ? KnockoffKind::fixed_x : KnockoffKind::model_x_gaussian;
    cfg.gibbs = gibbs(200, 50, 2, 0);
    const PreparedReplicate rd = prepare_replicate(cfg, 0);
    std::vector<int> swap;
    std::bernoulli_distribution coin(0.4);
    for (int j = 0; j < cfg.p; ++j) {
      if (coin(gen)) swap.push_back(j);
    }
    PreparedReplicate sw = rd;
    std::tie(sw.dataset.x, sw.knockoffs.x_tilde) = swap_columns(rd.dataset.x, rd.knockoffs.x_tilde, swap);
    const std::uint64_t mask_seed = 11 + static_cast<std::uint64_t>(s);
    const MaskedDataset m1 = mask(rd.dataset, rd.knockoffs, mask_seed);
    const MaskedDataset m2 = mask(sw.dataset, sw.knockoffs, mask_seed);
    const std::set<int> in(swap.begin(), swap.end());
    for (StatMethod m : methods) {
      const Vector w1 = compute_statistic(cfg, rd, m1, m, 0).w;
      const Vector w2 = compute_statistic(cfg, sw, m2, m, 0).w;
      ++total;
      for (int j = 0; j < cfg.p; ++j) {
        const double want = in.count(j) ? -w1(j) : w1(j);
        if (w2(j) != want) {
          ++bad;
          o.detail << "\n    swap set " << s << " " << to_string(m) << " feature " << j << ": " << w1(j) << " -> "
                   << w2(j);
          break;
        }
      }
    }
  }
  o.pass = bad == 0;
  o.detail << "\n    " << total << " (swap set, statistic) pairs, " << bad << " violations";
}

struct PowerRow {
  double mean, se;
  int failures;
};

PowerRow power_row(const ExperimentResult& res, const std::string& method) {
  int failures = 0;
  const auto pw = field(res, method, &RepRecord::power, &failures);
  return {mean_of(pw), se_of(pw), failures};
}

// Standard error of the per-replicate power difference between two methods.
double paired_se(const ExperimentResult& res, const std::string& a, const std::string& b) {
  std::map<int, double> pa, pb;
  for (const auto& r : res.records) {
    if (!r.ok) continue;
    if (r.method == a) pa[r.rep] = r.power;
    if (r.method == b) pb[r.rep] = r.power;
  }
  std::vector<double> diff;
  for (const auto& [rep, v] : pa) {
    if (pb.count(rep)) diff.push_back(v - pb[rep]);
  }
  return se_of(diff);
}

// 5. Power ordering in the AR(1) fixed-X setting.
void criterion_power(Outcome& o) {
  ExperimentConfig cfg;
  cfg.n = 300;
  cfg.p = 60;
  cfg.sparsity = 0.5;
  cfg.tau = 0.5;
  cfg.knockoff = KnockoffKind::fixed_x;
  cfg.statistics = {StatMethod::lcd, StatMethod::mlr, StatMethod::mlr_oracle};
  cfg.q = 0.05;
  cfg.n_reps = 200;
  cfg.seed = 2024;
  cfg.threads = worker_threads();
  const ExperimentResult res = run_experiment(cfg);
  const PowerRow lcd = power_row(res, "lcd"), mlr = power_row(res, "mlr"), orc = power_row(res, "mlr_oracle");
  const double se_diff = paired_se(res, "mlr", "lcd");
  const bool beats_lcd = mlr.mean >= lcd.mean + 2.0 * se_diff;
  const bool near_oracle = mlr.mean >= 0.85 * orc.mean;
  o.pass = beats_lcd && near_oracle && lcd.failures + mlr.failures + orc.failures == 0;
  o.detail << "\n    power lcd " << lcd.mean << " (se " << lcd.se << "), mlr " << mlr.mean << " (se " << mlr.se
           << "), oracle " << orc.mean << " (se " << orc.se << ")";
  o.detail << "\n    mlr >= lcd + 2se (paired se " << se_diff << "): " << (beats_lcd ? "yes" : "no") << "; mlr >= 0.85 oracle ("
           << 0.85 * orc.mean << "): " << (near_oracle ? "yes" : "no");
}

// 6. Laplace coefficients under the default Gaussian-slab prior.
void criterion_misspecified(Outcome& o) {
  ExperimentConfig cfg;
  cfg.n = 500;
  cfg.p = 200;
  cfg.sparsity = 0.3;
  cfg.tau = 0.3;
  cfg.coef_dist = CoefDist::laplace;
  cfg.knockoff = KnockoffKind::fixed_x;
  cfg.statistics = {StatMethod::lcd, StatMethod::mlr};
  cfg.q = 0.05;
  cfg.n_reps = 200;
  cfg.seed = 2025;
  cfg.threads = worker_threads();
  const ExperimentResult res = run_experiment(cfg);
  const PowerRow lcd = power_row(res, "lcd"), mlr = power_row(res, "mlr");
  const double se_diff = paired_se(res, "mlr", "lcd");
  o.pass = mlr.mean >= lcd.mean - 2.0 * se_diff && lcd.failures + mlr.failures == 0;
  o.detail << "\n    power lcd " << lcd.mean << " (se " << lcd.se << "), mlr " << mlr.mean << " (se " << mlr.se
           << "), paired se " << se_diff;
}

// 7. Conditional sign covariance under strong AR(1) correlation.
void criterion_local_dependence(Outcome& o) {
  double worst = 0.0;
  for (int inst = 0; inst < 3; ++inst) {
    ExperimentConfig cfg;
    cfg.n = 200;
    cfg.p = 50;
    cfg.sparsity = 1.0;
    cfg.tau = 0.5;
    cfg.cov.beta_a = 50.0;
    cfg.cov.beta_b = 1.0;
    cfg.knockoff = KnockoffKind::model_x_gaussian;
    cfg.seed = 60 + static_cast<std::uint64_t>(inst);
    const PreparedReplicate rd = prepare_replicate(cfg, 0);
    const MaskedDataset md = mask(rd.dataset, rd.knockoffs, 5);
    const MlrResult res = mlr_model_x_view(md.view, PriorConfig{}, gibbs(2000, 500, 2, 9));
    const DecayReport rep = decay_check(sign_cov(res.trace));
    worst = std::max(worst, rep.max_offdiag);
    o.detail << "\n    instance " << inst << ": max off-diagonal |cov| " << rep.max_offdiag;
  }
  o.pass = worst <= 0.15;
}

// 8. Hyperparameter updates against their closed-form conditionals.
void criterion_conjugate(Outcome& o) {
  const int draws = 100000;
  auto report = [&](const std::string& name, double pval) {
    const bool ok = pval > 0.01;
    o.pass = o.pass && ok;
    o.detail << "\n    " << name << ": KS p = " << pval << (ok ? "" : "  <-- rejected");
  };
  auto inv_gamma_cdf = [](double shape, double rate) {
    return [=](double x) { return x <= 0.0 ? 0.0 : boost::math::gamma_q(shape, rate / x); };
  };
  auto beta_cdf = [](double a, double b) {
    return [=](double x) { return x <= 0.0 ? 0.0 : (x >= 1.0 ? 1.0 : boost::math::ibeta(a, b, x)); };
  };

  PriorConfig prior;
  prior.mixture = {MixtureComponent{1.0, 2.0, 1.5}, MixtureComponent{3.0, 3.0, 0.5}};
  prior.sigma2_shape = 2.5;
  prior.sigma2_rate = 1.5;
  prior.sparsity_a = 2.0;
  prior.sparsity_b = 1.5;

  // Model-X state.
  {
    ExperimentConfig cfg;
    cfg.n = 50;
    cfg.p = 6;
    cfg.sparsity = 0.5;
    cfg.tau = 1.0;
    cfg.knockoff = KnockoffKind::model_x_gaussian;
    cfg.seed = 88;
    const PreparedReplicate rd = prepare_replicate(cfg, 0);
    const MaskedDataset md = mask(rd.dataset, rd.knockoffs, 2);
    const MaskedView& v = md.view;
    ModelXSampler s(v, prior, false, 123);
    const std::vector<std::uint8_t> bits{1, 0, 0, 1, 1, 0};
    const std::vector<int> labels{0, 1, 2, 0, 1, 2};
    std::vector<Vector> beta(6, Vector::Zero(1));
    const double bvals[6] = {0.0, 0.8, -1.1, 0.0, 0.3, 0.5};
    for (int u = 0; u < 6; ++u) beta[static_cast<std::size_t>(u)](0) = bvals[u];
    s.set_state(bits, labels, beta, 1.0, {1.0, 1.0}, {0.4, 0.3, 0.3});

    Vector r = v.y;
    for (int u = 0; u < 6; ++u) r -= (bits[static_cast<std::size_t>(u)] ? v.a.col(u) : v.b.col(u)) * bvals[u];
    std::vector<double> sig, t1, t2, p0;
    for (int i = 0; i < draws; ++i) {
      sig.push_back(s.draw_sigma2());
      const auto t = s.draw_tau2();
      t1.push_back(t[0]);
      t2.push_back(t[1]);
      p0.push_back(s.draw_weights()[0]);
    }
    report("model-X sigma2",
           oracle::ks_pvalue(sig, inv_gamma_cdf(prior.sigma2_shape + 0.5 * static_cast<double>(v.n()),
                                                prior.sigma2_rate + 0.5 * r.squaredNorm())));
    report("model-X tau2 slab 1",
           oracle::ks_pvalue(t1, inv_gamma_cdf(2.0 + 1.0, 1.5 + 0.5 * (0.8 * 0.8 + 0.3 * 0.3))));
    report("model-X tau2 slab 2",
           oracle::ks_pvalue(t2, inv_gamma_cdf(3.0 + 1.0, 0.5 + 0.5 * (1.1 * 1.1 + 0.5 * 0.5))));
    report("model-X p0", oracle::ks_pvalue(p0, beta_cdf(prior.sparsity_a + 2.0, prior.sparsity_b + 4.0)));
  }

  // Fixed-X state.
  {
    ExperimentConfig cfg;
    cfg.n = 60;
    cfg.p = 5;
    cfg.sparsity = 0.4;
    cfg.tau = 1.0;
    cfg.knockoff = KnockoffKind::fixed_x;
    cfg.seed = 89;
    const PreparedReplicate rd = prepare_replicate(cfg, 0);
    const MaskedDataset md = mask(rd.dataset, rd.knockoffs, 2);
    const MaskedView& v = md.view;
    FixedXSampler s(v, prior, 321);
    const std::vector<std::uint8_t> signs{1, 0, 1, 1, 0};
    const std::vector<int> labels{1, 0, 2, 0, 1};
    Vector beta(5);
    beta << 0.7, 0.0, -0.4, 0.0, 1.2;
    s.set_state(signs, labels, beta, 1.0, {1.0, 1.0}, {0.4, 0.3, 0.3});

    Matrix a = v.gram;
    a -= 0.5 * Matrix(v.s.diagonal().asDiagonal());
    const Vector resid = v.xi - a * beta;
    double rate = resid.dot(a.ldlt().solve(resid));
    for (int j = 0; j < 5; ++j) {
      const double bt = (signs[static_cast<std::size_t>(j)] ? 1.0 : -1.0) * v.abs_beta_tilde(j);
      rate += 0.5 * v.s(j, j) * (bt - beta(j)) * (bt - beta(j));
    }
    std::vector<double> sig, t1, t2, p0;
    for (int i = 0; i < draws; ++i) {
      sig.push_back(s.draw_sigma2());
      const auto t = s.draw_tau2();
      t1.push_back(t[0]);
      t2.push_back(t[1]);
      p0.push_back(s.draw_weights()[0]);
    }
    report("fixed-X sigma2", oracle::ks_pvalue(sig, inv_gamma_cdf(prior.sigma2_shape + 5.0,
                                                                  prior.sigma2_rate + 0.5 * rate)));
    report("fixed-X tau2 slab 1",
           oracle::ks_pvalue(t1, inv_gamma_cdf(2.0 + 1.0, 1.5 + 0.5 * (0.7 * 0.7 + 1.2 * 1.2))));
    report("fixed-X tau2 slab 2", oracle::ks_pvalue(t2, inv_gamma_cdf(3.0 + 0.5, 0.5 + 0.5 * 0.16)));
    report("fixed-X p0", oracle::ks_pvalue(p0, beta_cdf(prior.sparsity_a + 2.0, prior.sparsity_b + 3.0)));
  }
}

// 9. Coordinate descent against proximal gradient, plus KKT residuals.
void criterion_lasso(Outcome& o) {
  std::mt19937_64 gen(9);
  std::uniform_int_distribution<int> rows(15, 80), cols(2, 30);
  std::uniform_real_distribution<double> frac(0.02, 0.9);
  double worst_kkt = 0.0, worst_obj = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const int n = rows(gen), k = cols(gen);
    const Matrix z = oracle::unit_columns(oracle::random_normal(n, k, 100 + static_cast<unsigned>(inst)));
    Vector y = oracle::random_normal(n, 1, 900 + static_cast<unsigned>(inst)).col(0);
    for (int j = 0; j < std::min(k, 3); ++j) y += 2.0 * z.col(j);
    const double top = (z.transpose() * y).cwiseAbs().maxCoeff() / n;
    const double lambda = frac(gen) * top;
    const LassoFit fit = lasso_fit(z, y, lambda);

    const Vector c = z.transpose() * (y - z * fit.coefficients);
    const double pen = lambda * n;
    double kkt = 0.0;
    for (int j = 0; j < k; ++j) {
      const double b = fit.coefficients(j);
      kkt = std::max(kkt, b != 0.0 ? std::abs(c(j) - pen * (b > 0 ? 1.0 : -1.0)) : std::max(0.0, std::abs(c(j)) - pen));
    }
    auto objective = [&](const Vector& b) { return 0.5 * (y - z * b).squaredNorm() + pen * b.lpNorm<1>(); };
    const double f_cd = objective(fit.coefficients);
    const double f_ref = objective(oracle::fista_lasso(z, y, lambda));
    const double rel = std::abs(f_cd - f_ref) / std::abs(f_ref);
    worst_kkt = std::max(worst_kkt, kkt);
    worst_obj = std::max(worst_obj, rel);
    if (!fit.converged || kkt > 1e-6 || rel > 1e-8) {
      o.pass = false;
      o.detail << "\n    instance " << inst << " (n=" << n << ", k=" << k << "): kkt " << kkt << ", rel objective gap "
               << rel << ", converged " << fit.converged;
    }
  }
  o.detail << "\n    50 instances, max KKT residual " << worst_kkt << ", max relative objective gap " << worst_obj;
}

// 10. tau_q(R) against the threshold, and the fixed-X masked likelihood
// against enumeration over hidden signs.
void criterion_filter(Outcome& o) {
  std::mt19937_64 gen(10);
  std::uniform_int_distribution<int> size(1, 60);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> shift(0.0, 3.0);
  const double levels[] = {0.05, 0.1, 0.2, 0.3, 0.5, 1.0};
  int mismatches = 0;
  for (int it = 0; it < 10000; ++it) {
    const int p = size(gen);
    const double mu = shift(gen);
    Vector w(p);
    for (int j = 0; j < p; ++j) {
      w(j) = noise(gen) + (j < p / 3 ? mu : 0.0);
      if (w(j) == 0.0) w(j) = 1e-9;
    }
    const double q = levels[it % 6];
    if (psi_tau(sorted_sign_indicators(w), q).tau != static_cast<int>(threshold(w, q).rejected.size())) ++mismatches;
  }
  o.detail << "\n    filter fuzz: " << mismatches << " mismatches in 10000";

  double worst = 0.0;
  for (int inst = 0; inst < 30; ++inst) {
    const int p = 1 + inst % 3;
    ExperimentConfig cfg;
    cfg.n = 30;
    cfg.p = p;
    cfg.sparsity = 1.0;
    cfg.tau = 1.0;
    cfg.knockoff = KnockoffKind::fixed_x;
    cfg.seed = 700 + static_cast<std::uint64_t>(inst);
    const PreparedReplicate rd = prepare_replicate(cfg, 0);
    const MaskedView v = mask(rd.dataset, rd.knockoffs, 4).view;
    Matrix a = v.gram;
    a -= 0.5 * Matrix(v.s.diagonal().asDiagonal());
    auto enumerated = [&](const Vector& beta) {
      std::vector<double> terms;
      for (int bits = 0; bits < (1 << p); ++bits) {
        double t = oracle::log_mvn_zero_mean(v.xi - a * beta, a);
        for (int j = 0; j < p; ++j) {
          const double sign = (bits >> j) & 1 ? 1.0 : -1.0;
          t += oracle::log_normal_pdf(sign * v.abs_beta_tilde(j), beta(j), 2.0 / v.s(j, j));
        }
        terms.push_back(t);
      }
      return log_sum_exp(terms);
    };
    const Vector ref = Vector::Zero(p);
    const double base_impl = masked_loglik_fixed_x(ref, v), base_enum = enumerated(ref);
    for (unsigned k = 0; k < 10; ++k) {
      const Vector b = 1.5 * oracle::random_normal(p, 1, 50 * static_cast<unsigned>(inst) + k).col(0);
      const double dev = std::abs((masked_loglik_fixed_x(b, v) - base_impl) - (enumerated(b) - base_enum));
      worst = std::max(worst, dev);
    }
  }
  o.detail << "\n    masked likelihood vs enumeration: max deviation of differences " << worst;
  o.pass = mismatches == 0 && worst <= 1e-8;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"FDR control grid", criterion_fdr},
      {"Gibbs vs exact posterior", criterion_enumeration},
      {"magnitude identity", criterion_magnitude},
      {"flip-sign validity", criterion_flip_sign},
      {"power ordering", criterion_power},
      {"misspecified prior robustness", criterion_misspecified},
      {"local sign dependence", criterion_local_dependence},
      {"conjugate updates", criterion_conjugate},
      {"lasso solver", criterion_lasso},
      {"filter and masked likelihood", criterion_filter},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t c = 0; c < criteria.size(); ++c) {
    const int id = static_cast<int>(c) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[c].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "\n    exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("criterion %d (%s): %s [%.1f s]%s\n", id, criteria[c].first.c_str(), o.pass ? "PASS" : "FAIL", secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
