#include "kmlr/enumeration.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "kmlr/basis.hpp"
#include "kmlr/errors.hpp"

namespace kmlr {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// log N(v; 0, C) for symmetric positive definite C.
double log_gaussian(const Vector& v, const Matrix& c) {
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success) throw NumericalError("enumeration: covariance is not positive definite");
  const Matrix l = llt.matrixL();
  const Vector z = l.triangularView<Eigen::Lower>().solve(v);
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(v.size()) * kLog2Pi + logdet + z.squaredNorm());
}

// Log marginal of y ~ N(0, sigma2 I + Phi T Phi') via the Woodbury identity.
double log_marginal_y(const Vector& y, const Matrix& phi, const Vector& tdiag, double sigma2) {
  const double n = static_cast<double>(y.size());
  const double yy = y.squaredNorm();
  if (phi.cols() == 0) return -0.5 * (n * kLog2Pi + n * std::log(sigma2) + yy / sigma2);
  const Vector th = tdiag.cwiseSqrt();
  const Matrix g = th.asDiagonal() * (phi.transpose() * phi) * th.asDiagonal();
  Matrix m = Matrix::Identity(g.rows(), g.cols()) + g / sigma2;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError("enumeration: Woodbury factor failed");
  const Vector u = th.asDiagonal() * (phi.transpose() * y);
  const double logdet = n * std::log(sigma2) + 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
  const double quad = yy / sigma2 - u.dot(llt.solve(u)) / (sigma2 * sigma2);
  return -0.5 * (n * kLog2Pi + logdet + quad);
}

struct Enumerator {
  int units = 0;
  int labels = 0;  // m + 1
  std::vector<double> log_weights;
  std::vector<double> tau2;
};

// Calls f(bits, labels) for every combination.
template <typename F>
void for_each_config(const Enumerator& e, F&& f) {
  const long nbits = 1L << e.units;
  long nlab = 1;
  for (int u = 0; u < e.units; ++u) nlab *= e.labels;
  std::vector<int> lab(static_cast<std::size_t>(e.units));
  for (long bits = 0; bits < nbits; ++bits) {
    for (long code = 0; code < nlab; ++code) {
      long c = code;
      for (int u = 0; u < e.units; ++u) {
        lab[static_cast<std::size_t>(u)] = static_cast<int>(c % e.labels);
        c /= e.labels;
      }
      f(bits, lab);
    }
  }
}

// Log-likelihood of every configuration at a given sigma2.
template <typename Lik>
std::vector<double> config_log_terms(const Enumerator& e, Lik&& lik) {
  std::vector<double> out;
  for_each_config(e, [&](long bits, const std::vector<int>& lab) {
    double lp = 0.0;
    for (int l : lab) lp += e.log_weights[static_cast<std::size_t>(l)];
    out.push_back(std::isfinite(lp) ? lp + lik(bits, lab) : -std::numeric_limits<double>::infinity());
  });
  return out;
}

Vector posterior_from_terms(const Enumerator& e, const std::vector<double>& terms) {
  const long nbits = 1L << e.units;
  const std::size_t per = terms.size() / static_cast<std::size_t>(nbits);
  const double total = log_sum_exp(terms);
  Vector prob = Vector::Zero(e.units);
  for (int u = 0; u < e.units; ++u) {
    std::vector<double> on;
    for (long bits = 0; bits < nbits; ++bits) {
      if (!((bits >> u) & 1L)) continue;
      for (std::size_t k = 0; k < per; ++k) on.push_back(terms[static_cast<std::size_t>(bits) * per + k]);
    }
    prob(u) = std::exp(log_sum_exp(on) - total);
  }
  return prob;
}

double log_inv_gamma_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - boost::math::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

// Integrates exp(f(sigma2)) * IG(sigma2) over sigma2 by Simpson's rule on log sigma2.
template <typename F>
std::vector<double> integrate_sigma2(const PriorConfig& prior, F&& terms_at) {
  const int intervals = 1600;
  const double lo = std::log(1e-4), hi = std::log(1e4);
  const double h = (hi - lo) / intervals;
  std::vector<std::vector<double>> per_node;
  std::vector<double> weights;
  for (int i = 0; i <= intervals; ++i) {
    const double ls = lo + h * i;
    const double s2 = std::exp(ls);
    const double simpson = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    // Jacobian d sigma2 = sigma2 d log sigma2.
    weights.push_back(std::log(simpson * h / 3.0) + ls + log_inv_gamma_pdf(s2, prior.sigma2_shape, prior.sigma2_rate));
    per_node.push_back(terms_at(s2));
  }
  std::vector<double> out(per_node.front().size());
  std::vector<double> acc(per_node.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (std::size_t i = 0; i < per_node.size(); ++i) acc[i] = weights[i] + per_node[i][k];
    out[k] = log_sum_exp(acc);
  }
  return out;
}

Enumerator make_enumerator(const PriorConfig& prior, int units) {
  prior.validate();
  if (!prior.fixed_tau2 || !prior.fixed_weights) {
    throw ConfigError("enumeration needs fixed slab variances and mixture weights");
  }
  if (prior.point_mass) throw ConfigError("enumeration does not take a point-mass prior");
  if (units > 8) throw ConfigError("enumeration supports at most 8 units");
  Enumerator e;
  e.units = units;
  e.labels = prior.num_slabs() + 1;
  for (double w : *prior.fixed_weights) {
    e.log_weights.push_back(w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity());
  }
  e.tau2 = *prior.fixed_tau2;
  return e;
}

}  // namespace

Vector brute_force_posterior_view(const MaskedView& view, const PriorConfig& prior) {
  if (view.kind == MaskKind::model_x) {
    if (view.response_kind != ResponseKind::continuous) {
      throw ConfigError("enumeration needs a continuous response");
    }
    const Enumerator e = make_enumerator(prior, view.num_units());
    const auto basis = build_basis(view, prior.basis, prior.knots);
    auto terms_at = [&](double sigma2) {
      return config_log_terms(e, [&](long bits, const std::vector<int>& lab) {
        Eigen::Index d = 0;
        for (int u = 0; u < e.units; ++u) {
          if (lab[static_cast<std::size_t>(u)] > 0) d += basis[static_cast<std::size_t>(u)].dim();
        }
        Matrix phi(view.n(), d);
        Vector t(d);
        Eigen::Index at = 0;
        for (int u = 0; u < e.units; ++u) {
          const int l = lab[static_cast<std::size_t>(u)];
          if (l == 0) continue;
          const Matrix& block = basis[static_cast<std::size_t>(u)].phi[((bits >> u) & 1L) ? 0 : 1];
          phi.middleCols(at, block.cols()) = block;
          t.segment(at, block.cols()).setConstant(e.tau2[static_cast<std::size_t>(l - 1)]);
          at += block.cols();
        }
        // Zero-variance slabs contribute nothing.
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < d; ++i) {
          if (t(i) > 0.0) keep.push_back(i);
        }
        const Matrix phik = phi(Eigen::all, keep);
        const Vector tk = t(keep);
        return log_marginal_y(view.y, phik, tk, sigma2);
      });
    };
    const auto terms = prior.fixed_sigma2 ? terms_at(*prior.fixed_sigma2) : integrate_sigma2(prior, terms_at);
    return posterior_from_terms(e, terms);
  }

  // Fixed-X: (xi, beta~) is jointly Gaussian given the labels once beta is
  // integrated out.
  const int p = static_cast<int>(view.xi.size());
  const Enumerator e = make_enumerator(prior, p);
  if (prior.basis != BasisKind::identity) throw ConfigError("fixed-X enumeration needs the identity basis");
  Matrix a = 0.5 * (view.gram + view.gram.transpose());
  a.diagonal() -= 0.5 * view.s.diagonal();
  const Vector sinv = view.s.diagonal().cwiseInverse();
  auto terms_at = [&](double sigma2) {
    return config_log_terms(e, [&](long bits, const std::vector<int>& lab) {
      Vector t(p);
      for (int j = 0; j < p; ++j) {
        const int l = lab[static_cast<std::size_t>(j)];
        t(j) = l == 0 ? 0.0 : e.tau2[static_cast<std::size_t>(l - 1)];
      }
      const Matrix at = a * t.asDiagonal();
      Matrix cov(2 * p, 2 * p);
      cov.topLeftCorner(p, p) = sigma2 * a + at * a;
      cov.topRightCorner(p, p) = at;
      cov.bottomLeftCorner(p, p) = at.transpose();
      cov.bottomRightCorner(p, p) = Matrix(t.asDiagonal()) + Matrix((2.0 * sigma2 * sinv).asDiagonal());
      cov = (0.5 * (cov + cov.transpose())).eval();
      Vector v(2 * p);
      v.head(p) = view.xi;
      for (int j = 0; j < p; ++j) v(p + j) = (((bits >> j) & 1L) ? 1.0 : -1.0) * view.abs_beta_tilde(j);
      return log_gaussian(v, cov);
    });
  };
  const auto terms = prior.fixed_sigma2 ? terms_at(*prior.fixed_sigma2) : integrate_sigma2(prior, terms_at);
  return posterior_from_terms(e, terms);
}

Vector brute_force_posterior(const MaskedDataset& masked, const PriorConfig& prior) {
  const Vector view_prob = brute_force_posterior_view(masked.view, prior);
  const Vector ones = Vector::Ones(view_prob.size());
  const Vector dir = masked.view.kind == MaskKind::fixed_x ? orient_signs(ones, masked)
                                                          : orient_slots(ones, masked);
  Vector out(view_prob.size());
  for (Eigen::Index j = 0; j < out.size(); ++j) out(j) = dir(j) > 0 ? view_prob(j) : 1.0 - view_prob(j);
  return out;
}

}  // namespace kmlr
