#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kmlr/enumeration.hpp"
#include "kmlr/gibbs_mlr.hpp"
#include "kmlr/knockoff_gen.hpp"
#include "kmlr/linalg.hpp"
#include "kmlr/model_core.hpp"
#include "kmlr/rng.hpp"

namespace kmlr {

enum class CovKind { ar1, erdos_renyi, equicorrelated };

struct CovConfig {
  CovKind kind = CovKind::ar1;
  double beta_a = 5.0;  // AR(1): rho_j ~ min(cap, Beta(beta_a, beta_b))
  double beta_b = 1.0;
  double cap = 0.99;
  double init_variance = 1.0;  // Var(X_1) of the AR(1) chain
  double sparsity = 0.8;       // Erdos-Renyi: fraction of zero off-diagonals
  double rho = 0.5;            // equicorrelated
};

enum class CoefDist { uniform, laplace };
enum class ResponseModel { linear, gam, logistic };
enum class GamLink { sin, cos, quadratic, cubic };

struct ExperimentConfig {
  int n = 200;
  int p = 30;
  CovConfig cov;
  double sparsity = 0.1;  // fraction of non-null features
  CoefDist coef_dist = CoefDist::uniform;
  double tau = 0.5;
  ResponseModel response = ResponseModel::linear;
  GamLink gam_link = GamLink::sin;
  KnockoffKind knockoff = KnockoffKind::fixed_x;
  SMethod s_method = SMethod::mvr;
  std::vector<StatMethod> statistics{StatMethod::lcd, StatMethod::mlr};
  double q = 0.1;
  int n_reps = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  PriorConfig prior;
  GibbsConfig gibbs;
  bool timing = false;  // record wall-clock runtime in results

  void validate() const;
};

// AR(1) chain X_j | X_{j-1} ~ N(rho_j X_{j-1}, 1) rescaled to a correlation
// matrix. `rhos` (length p - 1) overrides the random draws.
Matrix ar1_sigma(int p, Rng& rng, const CovConfig& cfg = {},
                 const std::optional<Vector>& rhos = std::nullopt);
Matrix er_sigma(int p, Rng& rng, double sparsity = 0.8);
Matrix equicorrelated_sigma(int p, double rho);
Matrix make_sigma(int p, Rng& rng, const CovConfig& cfg);

struct Instance {
  Matrix x;  // raw scale, rows ~ N(0, Sigma)
  Vector y;
  Vector beta;
  std::vector<int> nonnull;  // ascending
  ResponseKind response_kind = ResponseKind::continuous;
};

Instance sample_instance(const ExperimentConfig& cfg, const Matrix& sigma, int rep);

// A replicate after standardization and knockoff construction.
struct PreparedReplicate {
  Matrix sigma;
  Instance instance;
  Dataset dataset;
  KnockoffModel knockoffs;
  Vector beta_standardized;  // true coefficients on the standardized scale
};

PreparedReplicate prepare_replicate(const ExperimentConfig& cfg, int rep);

// Computes one statistic, oriented and tie-broken, for a prepared replicate.
FeatureStatVector compute_statistic(const ExperimentConfig& cfg, const PreparedReplicate& rep_data,
                                    const MaskedDataset& masked, StatMethod method, int rep);

struct RepRecord {
  int rep = 0;
  std::string method;
  std::string knockoff;
  int n_rej = 0;
  double fdp = 0.0;
  double power = 0.0;
  double normalized_count = 0.0;
  std::uint64_t seed = 0;
  double runtime_ms = 0.0;
  bool ok = true;
  std::string error;
};

struct MethodSummary {
  std::string method;
  int n_ok = 0;
  int failures = 0;
  double mean_power = 0.0, se_power = 0.0;
  double mean_fdp = 0.0, se_fdp = 0.0;
  double mean_count = 0.0, se_count = 0.0;
};

struct ExperimentResult {
  std::vector<RepRecord> records;  // rep-major, statistics in config order
  std::vector<MethodSummary> summary;
};

std::vector<RepRecord> run_replicate(const ExperimentConfig& cfg, int rep);
ExperimentResult run_experiment(const ExperimentConfig& cfg);
std::vector<MethodSummary> summarize_records(const std::vector<RepRecord>& records,
                                             const std::vector<StatMethod>& methods);

std::string to_string(KnockoffKind kind);

}  // namespace kmlr
