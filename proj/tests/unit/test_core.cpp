#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "kmlr/errors.hpp"
#include "kmlr/knockoff_gen.hpp"
#include "kmlr/linalg.hpp"
#include "kmlr/model_core.hpp"
#include "kmlr/rng.hpp"
#include "oracles.hpp"

using namespace kmlr;

namespace {

Dataset small_dataset(int n, int p, unsigned seed) {
  Matrix x = oracle::random_normal(n, p, seed);
  Vector y = oracle::random_normal(n, 1, seed + 1).col(0);
  return Dataset::create(x, y, ResponseKind::continuous);
}

}  // namespace

TEST_CASE("derive_seed is a pure function of its arguments") {
  CHECK(derive_seed(7, Stream::gibbs, 3) == derive_seed(7, Stream::gibbs, 3));
  CHECK(derive_seed(7, Stream::gibbs, 3) != derive_seed(7, Stream::gibbs, 4));
  CHECK(derive_seed(7, Stream::gibbs, 3) != derive_seed(7, Stream::mask, 3));
  CHECK(derive_seed(7, Stream::gibbs, 3) != derive_seed(8, Stream::gibbs, 3));
}

TEST_CASE("rng moments") {
  Rng rng(11);
  const int n = 200000;
  double g = 0.0, b = 0.0, u_min = 1.0, u_max = 0.0, z2 = 0.0;
  for (int i = 0; i < n; ++i) {
    g += rng.gamma(3.0, 2.0);
    b += rng.beta(2.0, 5.0);
    const double u = rng.uniform();
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
    const double z = rng.normal();
    z2 += z * z;
  }
  CHECK(g / n == doctest::Approx(1.5).epsilon(0.01));
  CHECK(b / n == doctest::Approx(2.0 / 7.0).epsilon(0.01));
  CHECK(z2 / n == doctest::Approx(1.0).epsilon(0.01));
  CHECK(u_min > 0.0);
  CHECK(u_max < 1.0);
  Rng small(3);
  CHECK(small.gamma(0.3) > 0.0);
}

TEST_CASE("numerically stable helpers") {
  CHECK(log_cosh(0.0) == 0.0);
  CHECK(log_cosh(1000.0) == doctest::Approx(1000.0 - std::log(2.0)));
  CHECK(log_cosh(-2.0) == doctest::Approx(std::log(std::cosh(2.0))));
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(log_sigmoid(-800.0) == doctest::Approx(-800.0));
  const std::vector<double> v{1000.0, 1000.0};
  CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(2.0)));
  CHECK(log_add_exp(-std::numeric_limits<double>::infinity(), 2.0) == 2.0);
  CHECK(logit(0.75) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("cholesky_lower escalates jitter and then fails") {
  Matrix psd(2, 2);
  psd << 1.0, 1.0, 1.0, 1.0;
  const Matrix l = cholesky_lower(psd);
  CHECK(max_abs(l * l.transpose() - psd) < 1e-6);
  Matrix indefinite(2, 2);
  indefinite << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(cholesky_lower(indefinite), NumericalError);
}

TEST_CASE("sign_prob_from_w") {
  CHECK(sign_prob_from_w(0.0) == 0.5);
  CHECK(sign_prob_from_w(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-14));
  const double big = sign_prob_from_w(50.0);
  CHECK(std::abs(big - 1.0) <= 1e-15);
  // Agreement with the naive formula where it is safe.
  for (double w : {0.1, 1.0, 5.0, 20.0}) {
    CHECK(sign_prob_from_w(w) == doctest::Approx(std::exp(w) / (1.0 + std::exp(w))).epsilon(1e-14));
  }
  double last = 0.0;
  for (double w = 0.0; w < 30.0; w += 0.25) {
    const double p = sign_prob_from_w(w);
    CHECK(p >= 0.5);
    CHECK(p <= 1.0);
    if (w > 0.0 && w < 30.0) CHECK(p > last);
    last = p;
  }
  CHECK_THROWS_AS(sign_prob_from_w(std::numeric_limits<double>::quiet_NaN()), DataError);
  CHECK_THROWS_AS(sign_prob_from_w(-1.0), DataError);
  CHECK_THROWS_AS(sign_prob_from_w(std::numeric_limits<double>::infinity()), DataError);
}

TEST_CASE("swap_columns") {
  const Matrix x = oracle::random_normal(5, 2, 1);
  const Matrix xt = oracle::random_normal(5, 2, 2);
  SUBCASE("empty set leaves inputs unchanged") {
    auto [a, b] = swap_columns(x, xt, {});
    CHECK(a == x);
    CHECK(b == xt);
  }
  SUBCASE("full set exchanges the matrices") {
    auto [a, b] = swap_columns(x, xt, {0, 1});
    CHECK(a == xt);
    CHECK(b == x);
  }
  SUBCASE("single column") {
    auto [a, b] = swap_columns(x, xt, {0});
    CHECK(a.col(0) == xt.col(0));
    CHECK(b.col(0) == x.col(0));
    CHECK(a.col(1) == x.col(1));
    CHECK(b.col(1) == xt.col(1));
  }
  SUBCASE("involution") {
    for (const std::vector<int>& j : {std::vector<int>{}, std::vector<int>{1}, std::vector<int>{0, 1}}) {
      auto [a, b] = swap_columns(x, xt, j);
      auto [c, d] = swap_columns(a, b, j);
      CHECK(c == x);
      CHECK(d == xt);
    }
  }
  CHECK_THROWS_AS(swap_columns(x, xt, {2}), DataError);
  CHECK_THROWS_AS(swap_columns(x, xt, {-1}), DataError);
  CHECK_THROWS_AS(swap_columns(x, Matrix::Zero(5, 3), {}), DataError);
}

TEST_CASE("Dataset ingestion") {
  const Dataset d = small_dataset(20, 3, 5);
  for (Eigen::Index j = 0; j < 3; ++j) {
    CHECK(std::abs(d.x.col(j).sum()) < 1e-12);
    CHECK(d.x.col(j).norm() == doctest::Approx(1.0));
  }
  CHECK(std::abs(d.y.sum()) < 1e-12);

  Matrix raw = oracle::random_normal(10, 2, 9);
  const Dataset r = Dataset::create(raw, Vector::Ones(10), ResponseKind::continuous, false);
  CHECK(r.x == raw);

  Vector bad_y = Vector::Zero(10);
  bad_y(3) = 2.0;
  CHECK_THROWS_AS(Dataset::create(raw, bad_y, ResponseKind::binary), DataError);
  CHECK_THROWS_AS(Dataset::create(raw, Vector::Zero(9), ResponseKind::continuous), DataError);
  Matrix nan = raw;
  nan(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Dataset::create(nan, Vector::Zero(10), ResponseKind::continuous), DataError);
  Matrix constant = raw;
  constant.col(1).setConstant(2.0);
  CHECK_THROWS_AS(Dataset::create(constant, Vector::Zero(10), ResponseKind::continuous), DataError);
}

TEST_CASE("Partition") {
  const Partition s = Partition::singletons(3);
  CHECK(s.size() == 3);
  CHECK(s.all_singletons());
  const Partition g = Partition::from_labels({0, 1, 0, 2});
  CHECK(g.size() == 3);
  CHECK(g[0] == std::vector<int>{0, 2});
  CHECK_FALSE(g.all_singletons());
  CHECK_NOTHROW(g.validate(4));
  CHECK_THROWS_AS(g.validate(5), DataError);
  CHECK_THROWS_AS(Partition::from_labels({0, 2}), DataError);
  CHECK_THROWS_AS(Partition::from_labels({-1, 0}), DataError);
  CHECK_THROWS_AS(Partition({{0, 1}, {1}}).validate(2), DataError);
}

TEST_CASE("fixed-X masking") {
  const Dataset d = small_dataset(50, 3, 21);
  const KnockoffModel km = make_knockoffs(d.x, KnockoffKind::fixed_x, SMatrixSpec{}, 4);
  const MaskedDataset m = mask(d, km, 99);
  const Vector xy = d.x.transpose() * d.y;
  const Vector xty = km.x_tilde.transpose() * d.y;
  const Vector sd = km.s.diagonal();
  // xi +- S/2 |beta~| recovers the unordered pair.
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double hi = m.view.xi(j) + 0.5 * sd(j) * m.view.abs_beta_tilde(j);
    const double lo = m.view.xi(j) - 0.5 * sd(j) * m.view.abs_beta_tilde(j);
    const std::multiset<double> got{std::round(hi * 1e9), std::round(lo * 1e9)};
    const std::multiset<double> want{std::round(xy(j) * 1e9), std::round(xty(j) * 1e9)};
    CHECK(got == want);
  }
  // Signed identity with the hidden sign restored.
  auto [rx, rxt] = unmask_fixed_x(m);
  CHECK(max_abs(rx - xy) < 1e-10);
  CHECK(max_abs(rxt - xty) < 1e-10);
  // beta~ from its definition.
  const Vector bt = (xy - xty).cwiseQuotient(sd);
  CHECK(max_abs(m.view.abs_beta_tilde - bt.cwiseAbs()) < 1e-10);
  CHECK(max_abs(m.view.xi - 0.5 * (xy + xty)) < 1e-10);
  // orient_signs flips exactly where the true beta~ is negative.
  const Vector ones = Vector::Ones(3);
  const Vector oriented = orient_signs(ones, m);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(oriented(j) == (bt(j) > 0 ? 1.0 : -1.0));
}

TEST_CASE("fixed-X masking rejects degenerate knockoffs") {
  const Dataset d = small_dataset(30, 2, 3);
  KnockoffModel km;
  km.kind = KnockoffKind::fixed_x;
  km.x_tilde = d.x;
  km.sigma = d.x.transpose() * d.x;
  km.s = Matrix::Zero(2, 2);
  CHECK_THROWS_AS(mask(d, km, 1), DataError);
  km.x_tilde = Matrix::Zero(30, 3);
  km.s = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(mask(d, km, 1), DataError);
}

TEST_CASE("model-X masking") {
  const Dataset d = small_dataset(40, 6, 8);
  KnockoffModel km;
  km.kind = KnockoffKind::model_x_gaussian;
  km.x_tilde = oracle::unit_columns(oracle::random_normal(40, 6, 17));
  km.sigma = Matrix::Identity(6, 6);
  km.s = Matrix::Identity(6, 6);
  const MaskedDataset m1 = mask(d, km, 1);
  const MaskedDataset m2 = mask(d, km, 2);
  int differ = 0;
  for (Eigen::Index j = 0; j < 6; ++j) {
    const bool same_order = m1.view.a.col(j) == m2.view.a.col(j);
    if (!same_order) {
      ++differ;
      CHECK(m1.view.a.col(j) == m2.view.b.col(j));
      CHECK(m1.view.b.col(j) == m2.view.a.col(j));
    }
    // Each pair is {x_j, x~_j} as a set.
    const bool a_is_x = m1.view.a.col(j) == d.x.col(j);
    CHECK((a_is_x ? m1.view.b.col(j) == km.x_tilde.col(j)
                  : (m1.view.a.col(j) == km.x_tilde.col(j) && m1.view.b.col(j) == d.x.col(j))));
  }
  CHECK(differ > 0);
  auto [x, xt] = unmask_model_x(m1);
  CHECK(x == d.x);
  CHECK(xt == km.x_tilde);

  SUBCASE("the view does not depend on which member is the feature") {
    auto [sx, sxt] = swap_columns(d.x, km.x_tilde, {0, 2, 5});
    Dataset ds = d;
    ds.x = sx;
    KnockoffModel ks = km;
    ks.x_tilde = sxt;
    const MaskedDataset ms = mask(ds, ks, 1);
    CHECK(ms.view.a == m1.view.a);
    CHECK(ms.view.b == m1.view.b);
    const Vector w = Vector::LinSpaced(6, 1.0, 6.0);
    const Vector o1 = orient_slots(w, m1);
    const Vector o2 = orient_slots(w, ms);
    for (Eigen::Index j = 0; j < 6; ++j) {
      const bool swapped = j == 0 || j == 2 || j == 5;
      CHECK(o2(j) == (swapped ? -o1(j) : o1(j)));
    }
  }

  SUBCASE("identical pairs") {
    KnockoffModel same = km;
    same.x_tilde = d.x;
    const MaskedDataset ms = mask(d, same, 5);
    CHECK(ms.view.a == ms.view.b);
  }
  CHECK_THROWS_AS(orient_signs(Vector::Ones(6), m1), DataError);
  CHECK_THROWS_AS(orient_slots(Vector::Ones(5), m1), DataError);
}

TEST_CASE("finalize_ties") {
  Vector w(5);
  w << 0.0, 2.0, -0.5, 0.0, 1.0;
  const FeatureStatVector f = finalize_ties(w, StatMethod::lcd, 12);
  CHECK(std::abs(f.w(0)) == 0.25);
  CHECK(std::abs(f.w(3)) == 0.25);
  CHECK(f.w(1) == 2.0);
  CHECK(f.w(2) == -0.5);
  CHECK(f.tie_broken == std::vector<std::uint8_t>{1, 0, 0, 1, 0});
  const FeatureStatVector again = finalize_ties(w, StatMethod::lcd, 12);
  CHECK(again.w == f.w);
  const FeatureStatVector zeros = finalize_ties(Vector::Zero(64), StatMethod::lcd, 3);
  int positive = 0;
  for (Eigen::Index j = 0; j < 64; ++j) {
    CHECK(std::abs(zeros.w(j)) == 1e-8);
    positive += zeros.w(j) > 0;
  }
  CHECK(positive > 10);
  CHECK(positive < 54);
  Vector bad = w;
  bad(1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(finalize_ties(bad, StatMethod::lcd, 1), NumericalError);
}

TEST_CASE("GibbsTrace validation and append") {
  GibbsTrace t;
  CHECK_THROWS_AS(t.validate(), DataError);
  t.eta = Matrix::Zero(2, 3);
  t.sign_indicators = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(2, 3);
  CHECK_NOTHROW(t.validate());
  GibbsTrace u = t;
  u.eta(0, 0) = 1.0;
  t.append(u);
  CHECK(t.n_sample() == 4);
  CHECK(t.chains == 2);
  CHECK(t.eta(2, 0) == 1.0);
  t.sign_indicators(0, 0) = 2;
  CHECK_THROWS_AS(t.validate(), DataError);
  t.sign_indicators(0, 0) = 1;
  t.eta(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(t.validate(), NumericalError);
  GibbsTrace narrow;
  narrow.eta = Matrix::Zero(1, 2);
  narrow.sign_indicators = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(1, 2);
  CHECK_THROWS_AS(t.append(narrow), DataError);
}

TEST_CASE("stat method names round-trip") {
  for (StatMethod m : {StatMethod::lcd, StatMethod::lsm, StatMethod::mlr, StatMethod::mlr_oracle,
                       StatMethod::mlr_spline, StatMethod::mlr_probit, StatMethod::mlr_group}) {
    CHECK(stat_method_from_string(to_string(m)) == m);
  }
  CHECK_THROWS_AS(stat_method_from_string("lasso"), ConfigError);
}
