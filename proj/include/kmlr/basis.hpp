#pragma once

#include <vector>

#include "kmlr/linalg.hpp"
#include "kmlr/model_core.hpp"

namespace kmlr {

enum class BasisKind { identity, cubic_spline };

// Feature map of one unit evaluated on each side of its masked pair, with the
// eigendecomposition of each Gram matrix Phi'Phi.
struct UnitBasis {
  Matrix phi[2];
  Matrix eigvec[2];
  Vector eigval[2];
  Eigen::Index dim() const { return phi[0].cols(); }
};

// Knots and standardization depend only on the pooled pair values, so the
// basis is a function of the masked view.
std::vector<UnitBasis> build_basis(const MaskedView& view, BasisKind kind, int knots);

// Truncated-power cubic basis x, x^2, x^3, (x - k)^3_+ for each knot.
Matrix cubic_spline_columns(const Vector& x, const Vector& knots);

}  // namespace kmlr
