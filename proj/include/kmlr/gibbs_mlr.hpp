#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kmlr/basis.hpp"
#include "kmlr/linalg.hpp"
#include "kmlr/model_core.hpp"
#include "kmlr/rng.hpp"

namespace kmlr {

// One slab of the mixture prior: weight prior alpha and an inverse-gamma
// hyperprior (shape, rate) on its variance.
struct MixtureComponent {
  double weight_alpha = 1.0;
  double shape = 2.0;
  double rate = 2.0;
};

// Exact coefficients (one entry per feature, standardized scale) and noise
// variance for the oracle statistic.
struct PointMass {
  Vector beta;
  double sigma2 = 1.0;
};

struct PriorConfig {
  BasisKind basis = BasisKind::identity;
  int knots = 1;
  std::vector<MixtureComponent> mixture{MixtureComponent{}};
  double sigma2_shape = 2.0;
  double sigma2_rate = 2.0;
  double sparsity_a = 1.0;  // Beta(a0, b0) prior on the spike weight p0
  double sparsity_b = 1.0;
  std::optional<PointMass> point_mass;

  // Pin hyperparameters instead of sampling them.
  std::optional<double> fixed_sigma2;
  std::optional<std::vector<double>> fixed_tau2;     // one per slab
  std::optional<std::vector<double>> fixed_weights;  // (p0, p1, ..., pm)

  int num_slabs() const { return static_cast<int>(mixture.size()); }
  void validate() const;
};

struct GibbsConfig {
  int n_sample = 2000;
  int burn_in = 500;
  int chains = 2;
  std::uint64_t seed = 0;
  bool marginalize_beta_on_x_update = true;
  int threads = 1;
  int resync_every = 100;
  double rhat_warning = 1.2;

  void validate() const;
};

struct MlrResult {
  FeatureStatVector stats;  // oriented: positive favours the real feature
  GibbsTrace trace;         // view frame
  double max_split_rhat = 1.0;
  std::vector<std::string> warnings;
};

// Sampler for model-X masked data (continuous or probit-binary response).
// Units are features or groups; the hidden choice per unit is X_u in {a_u, b_u}.
class ModelXSampler {
 public:
  ModelXSampler(const MaskedView& view, const PriorConfig& prior, bool probit, std::uint64_t seed);

  int num_units() const { return static_cast<int>(basis_.size()); }
  bool probit() const { return probit_; }

  // log P(X_u = a_u | rest) / P(X_u = b_u | rest), beta_u marginalized.
  double x_log_odds(int u) const;
  // Same odds with beta_u held at its current value.
  double x_log_odds_unmarginalized(int u) const;
  // Draws X_u; returns the log-odds used.
  double resample_x(int u, bool marginalize = true);

  // log P(gamma_u = 0 | rest) - log P(gamma_u != 0 | rest) at the current X_u.
  double gamma_log_odds(int u) const;
  void update_gamma_beta(int u);

  double draw_sigma2();
  std::vector<double> draw_tau2();
  std::vector<double> draw_weights();
  void refresh_latent();
  void update_hyperparameters();

  // One full sweep; eta receives the per-unit log-odds.
  void sweep(Eigen::Ref<Vector> eta, bool marginalize);
  void resync_residual();

  // State access (tests, trace recording).
  bool x_bit(int u) const { return x_bits_[static_cast<std::size_t>(u)] != 0; }
  int label(int u) const { return labels_[static_cast<std::size_t>(u)]; }
  const Vector& beta(int u) const { return beta_[static_cast<std::size_t>(u)]; }
  const Vector& residual() const { return r_; }
  double sigma2() const { return sigma2_; }
  const std::vector<double>& tau2() const { return tau2_; }
  const std::vector<double>& weights() const { return weights_; }
  const Vector& latent() const { return latent_; }
  Vector residual_from_scratch() const;

  void set_state(const std::vector<std::uint8_t>& x_bits, const std::vector<int>& labels,
                 const std::vector<Vector>& beta, double sigma2, const std::vector<double>& tau2,
                 const std::vector<double>& weights);

 private:
  double log_marginal(int u, int side, const Vector& r_minus) const;
  std::vector<double> slab_log_bf(int u, int side, const Vector& r_minus) const;
  Vector residual_without(int u) const;
  Vector fitted() const;

  const MaskedView& view_;
  PriorConfig prior_;
  bool probit_;
  bool oracle_;
  Rng rng_;
  std::vector<UnitBasis> basis_;
  Vector response_;  // y, or the latent y for probit
  std::vector<std::uint8_t> x_bits_;
  std::vector<int> labels_;
  std::vector<Vector> beta_;
  Vector r_;
  double intercept_ = 0.0;
  double sigma2_ = 1.0;
  std::vector<double> tau2_;
  std::vector<double> weights_;
  Vector latent_;
};

// Sampler over hidden signs of beta~ for fixed-X masked data, using the
// sufficient statistics (xi, |beta~|) only.
class FixedXSampler {
 public:
  FixedXSampler(const MaskedView& view, const PriorConfig& prior, std::uint64_t seed);

  int num_units() const { return static_cast<int>(sign_.size()); }
  // log P(sign_j = + | rest) / P(sign_j = - | rest), beta_j and its label marginalized.
  double sign_log_odds(int j) const;
  double sign_log_odds_unmarginalized(int j) const;
  double resample_sign(int j, bool marginalize = true);
  // Label probabilities (p0, ..., pm) for coordinate j given everything else.
  std::vector<double> label_probabilities(int j) const;
  void update_label_beta(int j);
  // Rate of the inverse-gamma conditional of sigma^2 at the current state.
  double sigma2_rate() const;
  double sigma2_shape() const;
  double draw_sigma2();
  std::vector<double> draw_tau2();
  std::vector<double> draw_weights();
  void update_hyperparameters();
  void sweep(Eigen::Ref<Vector> eta, bool marginalize);

  bool sign_bit(int j) const { return sign_[static_cast<std::size_t>(j)] != 0; }
  const Vector& beta() const { return beta_; }
  double sigma2() const { return sigma2_; }
  const std::vector<double>& tau2() const { return tau2_; }
  const std::vector<double>& weights() const { return weights_; }

  void set_state(const std::vector<std::uint8_t>& signs, const std::vector<int>& labels,
                 const Vector& beta, double sigma2, const std::vector<double>& tau2,
                 const std::vector<double>& weights);

 private:
  double u_value(int j, double sign) const;
  double log_marginal(int j, double u) const;
  void refresh_xty();

  const MaskedView& view_;
  PriorConfig prior_;
  bool oracle_;
  Rng rng_;
  Matrix sigma_;
  Vector s_diag_;
  Matrix a_;
  Eigen::LLT<Matrix> a_llt_;
  std::vector<std::uint8_t> sign_;
  std::vector<int> labels_;
  Vector beta_;
  Vector xty_;
  Vector sigma_beta_;
  double sigma2_ = 1.0;
  std::vector<double> tau2_;
  std::vector<double> weights_;
};

// Masked log-likelihood of beta under fixed-X masking, sigma^2 = 1, constants
// dropped: b'xi - b'Ab/2 - sum_j [S_jj b_j^2 / 4 - log cosh(b_j |beta~_j| S_jj / 2)].
double masked_loglik_fixed_x(const Vector& beta, const MaskedView& view);

// Converts a trace into W (view frame) with the epsilon tie-break applied.
FeatureStatVector finalize_w(const GibbsTrace& trace, std::uint64_t seed,
                             StatMethod method = StatMethod::mlr);

// Split potential scale reduction of the per-unit sign probabilities.
double max_split_rhat(const GibbsTrace& trace);

// Samplers on the public view; W in the view frame.
MlrResult mlr_model_x_view(const MaskedView& view, const PriorConfig& prior, const GibbsConfig& cfg,
                           bool probit = false);
MlrResult mlr_fixed_x_view(const MaskedView& view, const PriorConfig& prior, const GibbsConfig& cfg);

// Entry points taking the masked dataset; W is oriented to the feature frame.
MlrResult mlr_model_x(const MaskedDataset& masked, const PriorConfig& prior, const GibbsConfig& cfg);
MlrResult mlr_fixed_x(const MaskedDataset& masked, const PriorConfig& prior, const GibbsConfig& cfg);
MlrResult mlr_probit(const MaskedDataset& masked, const PriorConfig& prior, const GibbsConfig& cfg);
MlrResult mlr_group(const MaskedDataset& masked, const PriorConfig& prior, const GibbsConfig& cfg);
// Dispatches on the masked kind and response.
MlrResult mlr_auto(const MaskedDataset& masked, const PriorConfig& prior, const GibbsConfig& cfg);

// Oracle statistic with a point-mass prior. Fixed-X uses the closed form
// W_j = S_jj |beta~_j| beta_j / sigma^2; model-X runs the sampler over X only.
FeatureStatVector oracle_mlr(const MaskedDataset& masked, const PriorConfig& truth,
                             const GibbsConfig& cfg);

}  // namespace kmlr
