#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kmlr/linalg.hpp"

namespace kmlr {

enum class ResponseKind { continuous, binary };
enum class KnockoffKind { fixed_x, model_x_gaussian };

// Design matrix and response. Columns of x are centered and scaled to unit
// Euclidean norm unless the dataset was built in raw-scale mode.
struct Dataset {
  Matrix x;
  Vector y;
  ResponseKind response_kind = ResponseKind::continuous;
  Vector column_center;  // per-column shift applied at ingestion
  Vector column_scale;   // per-column divisor applied at ingestion

  static Dataset create(Matrix x, Vector y, ResponseKind kind, bool standardize = true);

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index p() const { return x.cols(); }
  void validate() const;
};

// Centers every column and scales it to unit Euclidean norm. Returns the
// (center, scale) pairs that were applied.
std::pair<Vector, Vector> standardize_columns(Matrix& x);

// A partition of {0, ..., p-1} into groups.
class Partition {
 public:
  Partition() = default;
  explicit Partition(std::vector<std::vector<int>> groups);

  static Partition singletons(int p);
  // labels[j] is the group of feature j; labels must use 0..m-1.
  static Partition from_labels(const std::vector<int>& labels);

  int size() const { return static_cast<int>(groups_.size()); }
  int num_features() const { return num_features_; }
  const std::vector<int>& operator[](int g) const { return groups_[static_cast<std::size_t>(g)]; }
  const std::vector<std::vector<int>>& groups() const { return groups_; }
  bool all_singletons() const;
  // Throws DataError unless the groups cover [p] exactly once.
  void validate(int p) const;

 private:
  std::vector<std::vector<int>> groups_;
  int num_features_ = 0;
};

struct KnockoffModel {
  Matrix x_tilde;
  Matrix sigma;  // X^T X for fixed-X, feature covariance for model-X
  Matrix s;      // diagonal, or block-diagonal on the group pattern
  KnockoffKind kind = KnockoffKind::fixed_x;
  std::optional<Partition> groups;

  // Checks 2 Sigma - S >= -tol and, for fixed-X, the Gram identities against x.
  void validate(const Matrix& x, double tol = 1e-8) const;
};

// Swaps the columns in j_set between the two matrices. Applying it twice is
// the identity.
std::pair<Matrix, Matrix> swap_columns(const Matrix& x, const Matrix& x_tilde,
                                       const std::vector<int>& j_set);

// P(W_j > 0 | D) implied by the magnitude of an MLR statistic.
double sign_prob_from_w(double abs_w);

enum class MaskKind { model_x, fixed_x };

// The analyst-visible masked data. Each unit u (a feature, or a group of
// features) comes as an unordered pair of column blocks stored as `a` and
// `b`; their order is canonical (lexicographic) flipped by seed-derived bits,
// so the view is identical for [X, X~] and any [X, X~]_swap(J).
//
// Fixed-X views also carry the sufficient statistics xi = (A + B)^T y / 2 and
// |beta~| = |S^-1 (A - B)^T y|, the Gram matrix A^T A and S; y itself is
// not part of a fixed-X view.
struct MaskedView {
  MaskKind kind = MaskKind::model_x;
  Partition units;
  Matrix a;
  Matrix b;
  Vector y;  // model-X only
  ResponseKind response_kind = ResponseKind::continuous;

  Vector xi;
  Vector abs_beta_tilde;
  Matrix s;
  Matrix gram;

  std::uint64_t seed = 0;

  int num_units() const { return units.size(); }
  Eigen::Index n() const { return a.rows(); }
  Eigen::Index p() const { return a.cols(); }
  // Block of columns belonging to unit u from one side of the pair.
  Matrix unit_block(const Matrix& side, int u) const;
};

struct MaskedDataset;

// Sealed record of which pair member is the real feature. Only the
// orientation and unmasking helpers below can read it.
class HiddenTruth {
 public:
  int num_units() const { return static_cast<int>(slot_a_is_feature_.size()); }

 private:
  std::vector<std::uint8_t> slot_a_is_feature_;
  std::vector<std::uint8_t> positive_sign_is_true_;  // fixed-X only

  friend MaskedDataset mask(const Dataset&, const KnockoffModel&, std::uint64_t);
  friend Vector orient_slots(const Vector&, const MaskedDataset&);
  friend Vector orient_signs(const Vector&, const MaskedDataset&);
  friend std::pair<Matrix, Matrix> unmask_model_x(const MaskedDataset&);
  friend std::pair<Vector, Vector> unmask_fixed_x(const MaskedDataset&);
};

struct MaskedDataset {
  MaskedView view;
  HiddenTruth truth;
};

MaskedDataset mask(const Dataset& dataset, const KnockoffModel& knockoffs, std::uint64_t seed);

// Maps a statistic computed in the view frame (positive favours slot `a`)
// to the feature frame (positive favours the real feature).
Vector orient_slots(const Vector& w_view, const MaskedDataset& masked);
// Fixed-X: view frame positive favours beta~_j = +|beta~_j|.
Vector orient_signs(const Vector& w_view, const MaskedDataset& masked);

// Reconstruct (X, X~) or (X^T y, X~^T y) with the hidden bits.
std::pair<Matrix, Matrix> unmask_model_x(const MaskedDataset& masked);
std::pair<Vector, Vector> unmask_fixed_x(const MaskedDataset& masked);

enum class StatMethod { lcd, lsm, mlr, mlr_oracle, mlr_spline, mlr_probit, mlr_group, other };
std::string to_string(StatMethod method);
StatMethod stat_method_from_string(const std::string& name);

struct FeatureStatVector {
  Vector w;
  StatMethod method = StatMethod::other;
  std::optional<Vector> posterior_sign_prob;
  std::vector<std::uint8_t> tie_broken;  // entries replaced by +-epsilon
};

// Replaces exact zeros by +-epsilon, epsilon = half the smallest nonzero |w|
// (1e-8 if all are zero), with signs drawn from the seed.
FeatureStatVector finalize_ties(Vector w, StatMethod method, std::uint64_t seed);

struct ParamDraw {
  double sigma2 = 1.0;
  double tau2 = 1.0;
  double p0 = 0.5;
};

// Per-iteration Gibbs records after burn-in, chains stacked in chain order.
// eta and sign bits are in the view frame (bit 1 <=> current X_u = a_u, or
// for fixed-X the positive sign).
struct GibbsTrace {
  Matrix eta;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> sign_indicators;
  std::vector<ParamDraw> param_draws;
  int burn_in = 0;
  int chains = 1;

  Eigen::Index n_sample() const { return eta.rows(); }
  Eigen::Index num_units() const { return eta.cols(); }
  void validate() const;
  // Appends rows of another trace (same number of units).
  void append(const GibbsTrace& other);
};

}  // namespace kmlr
