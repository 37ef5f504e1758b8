#pragma once

#include <limits>
#include <vector>

#include "kmlr/linalg.hpp"
#include "kmlr/model_core.hpp"

namespace kmlr {

struct RejectionResult {
  double threshold = std::numeric_limits<double>::infinity();
  std::vector<int> rejected;  // ascending indices
  double q = 0.1;
};

// Knockoff+ threshold: T = min{t in |W| : (#{W <= -t} + 1) / #{W >= t} <= q}.
RejectionResult threshold(const Vector& w, double q);
inline RejectionResult threshold(const FeatureStatVector& w, double q) { return threshold(w.w, q); }

struct PsiTau {
  int psi = 0;
  int tau = 0;
};

// eta sorted by decreasing |W| (ties by index). psi is the largest prefix
// length k in [p] with (k - k mean_k + 1) / (k mean_k) <= q; tau is the
// implied discovery count.
PsiTau psi_tau(const Vector& eta, double q);

// Indicators R_j = 1{W_j > 0} in decreasing-|W| order, ties by index.
Vector sorted_sign_indicators(const Vector& w);

struct Score {
  double fdp = 0.0;
  double power = 0.0;
  double normalized_count = 0.0;  // |rejected| / |truth|
  int n_rej = 0;
};

Score fdp_power(const std::vector<int>& rejected, const std::vector<int>& truth);

}  // namespace kmlr
