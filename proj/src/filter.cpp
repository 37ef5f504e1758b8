#include "kmlr/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "kmlr/errors.hpp"

namespace kmlr {

namespace {

void check_q(double q) {
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("q must lie in (0, 1]");
}

std::vector<Eigen::Index> order_by_magnitude(const Vector& w) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(w.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(w(a)) > std::abs(w(b)); });
  return order;
}

}  // namespace

RejectionResult threshold(const Vector& w, double q) {
  check_q(q);
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (w(j) == 0.0) throw DataError("W has an exact zero at index " + std::to_string(j) + "; apply the tie-break first");
    if (!std::isfinite(w(j))) throw DataError("W has a non-finite entry at index " + std::to_string(j));
  }
  RejectionResult out;
  out.q = q;
  // Scan candidates in decreasing magnitude; counts at t = |W_(k)| include
  // every entry with magnitude >= t.
  const auto order = order_by_magnitude(w);
  long positives = 0, negatives = 0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = std::abs(w(order[k]));
    std::size_t end = k;
    while (end < order.size() && std::abs(w(order[end])) == t) {
      (w(order[end]) > 0 ? positives : negatives) += 1;
      ++end;
    }
    if (positives > 0 &&
        static_cast<double>(negatives + 1) <= q * static_cast<double>(positives)) {
      out.threshold = t;
    }
    k = end;
  }
  if (std::isfinite(out.threshold)) {
    for (Eigen::Index j = 0; j < w.size(); ++j) {
      if (w(j) >= out.threshold) out.rejected.push_back(static_cast<int>(j));
    }
  }
  return out;
}

PsiTau psi_tau(const Vector& eta, double q) {
  check_q(q);
  const Eigen::Index p = eta.size();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(eta(j) >= 0.0 && eta(j) <= 1.0)) throw DataError("psi_tau: entries must lie in [0, 1]");
  }
  PsiTau out;
  double sum = 0.0;
  for (Eigen::Index k = 1; k <= p; ++k) {
    sum += eta(k - 1);
    const double kk = static_cast<double>(k);
    if (sum > 0.0 && (kk - sum + 1.0) <= q * sum) out.psi = static_cast<int>(k);
  }
  if (out.psi == 0) return out;
  // Beyond p the sequence is padded with zeros, so the prefix can keep
  // qualifying only while its false count stays within budget.
  int psi_ext = out.psi;
  if (out.psi == p) {
    for (long k = p + 1;; ++k) {
      if ((static_cast<double>(k) - sum + 1.0) <= q * sum) {
        psi_ext = static_cast<int>(k);
      } else {
        break;
      }
    }
  }
  out.tau = static_cast<int>(std::ceil((psi_ext + 1.0) / (1.0 + q) - 1e-12));
  return out;
}

Vector sorted_sign_indicators(const Vector& w) {
  const auto order = order_by_magnitude(w);
  Vector r(w.size());
  for (std::size_t k = 0; k < order.size(); ++k) r(static_cast<Eigen::Index>(k)) = w(order[k]) > 0 ? 1.0 : 0.0;
  return r;
}

Score fdp_power(const std::vector<int>& rejected, const std::vector<int>& truth) {
  const std::set<int> t(truth.begin(), truth.end());
  const std::set<int> r(rejected.begin(), rejected.end());
  int hits = 0;
  for (int j : r) hits += t.count(j) ? 1 : 0;
  Score s;
  s.n_rej = static_cast<int>(r.size());
  s.fdp = static_cast<double>(s.n_rej - hits) / std::max(s.n_rej, 1);
  s.power = static_cast<double>(hits) / std::max<std::size_t>(t.size(), 1);
  s.normalized_count = static_cast<double>(s.n_rej) / std::max<std::size_t>(t.size(), 1);
  return s;
}

}  // namespace kmlr
