#include <doctest.h>

#include <cmath>
#include <random>

#include "kmlr/diagnostics.hpp"
#include "kmlr/errors.hpp"
#include "kmlr/filter.hpp"
#include "kmlr/linalg.hpp"

using namespace kmlr;

namespace {

using Bits = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

GibbsTrace bits_trace(const Bits& bits) {
  GibbsTrace t;
  t.sign_indicators = bits;
  t.eta = Matrix::Zero(bits.rows(), bits.cols());
  t.param_draws.resize(static_cast<std::size_t>(bits.rows()));
  return t;
}

Bits random_bits(Eigen::Index rows, Eigen::Index cols, double rate, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::bernoulli_distribution coin(rate);
  Bits b(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) b(i, j) = coin(gen) ? 1 : 0;
  return b;
}

}  // namespace

TEST_CASE("sign covariance") {
  SUBCASE("constant indicators") {
    Bits b = Bits::Zero(200, 4);
    b.col(2).setOnes();
    CHECK(sign_cov(bits_trace(b)).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("independent fair bits") {
    const Eigen::Index ns = 4000;
    const Matrix cov = sign_cov(bits_trace(random_bits(ns, 6, 0.5, 3)));
    const double band = 3.0 / std::sqrt(static_cast<double>(ns)) * 0.25;
    for (Eigen::Index i = 0; i < 6; ++i) {
      CHECK(cov(i, i) == doctest::Approx(0.25).epsilon(0.02));
      for (Eigen::Index j = 0; j < 6; ++j) {
        if (i != j) CHECK(std::abs(cov(i, j)) <= band);
      }
    }
  }

  SUBCASE("against a direct two-pass computation") {
    const Bits b = random_bits(300, 5, 0.3, 7);
    const Matrix cov = sign_cov(bits_trace(b));
    const Matrix x = b.cast<double>();
    for (Eigen::Index i = 0; i < 5; ++i) {
      for (Eigen::Index j = 0; j < 5; ++j) {
        const double mi = x.col(i).mean(), mj = x.col(j).mean();
        double acc = 0.0;
        for (Eigen::Index r = 0; r < 300; ++r) acc += (x(r, i) - mi) * (x(r, j) - mj);
        CHECK(cov(i, j) == doctest::Approx(acc / 300.0).epsilon(1e-12));
      }
    }
  }

  SUBCASE("structural properties") {
    for (unsigned seed = 1; seed <= 20; ++seed) {
      Bits b = random_bits(150, 7, 0.2 + 0.03 * seed, seed);
      // Correlate two columns.
      b.col(3) = b.col(1);
      const Matrix cov = sign_cov(bits_trace(b));
      CHECK(cov == cov.transpose());
      CHECK(min_eigenvalue(cov) >= -1e-8);
      for (Eigen::Index j = 0; j < 7; ++j) {
        CHECK(cov(j, j) >= 0.0);
        CHECK(cov(j, j) <= 0.25);
      }
    }
  }

  SUBCASE("too few samples") {
    CHECK_THROWS_AS(sign_cov(bits_trace(Bits::Zero(99, 3))), DataError);
    CHECK_NOTHROW(sign_cov(bits_trace(Bits::Zero(10, 3)), 10));
    CHECK_THROWS_AS(sign_cov(bits_trace(Bits::Zero(1, 3)), 1), DataError);
  }
}

TEST_CASE("decay check") {
  SUBCASE("zero matrix passes") {
    for (double c : {0.0, 0.5, 2.0}) {
      const DecayReport r = decay_check(Matrix::Zero(5, 5), c, 0.5);
      CHECK(r.pass);
      CHECK(r.max_offdiag == 0.0);
      CHECK(r.max_ratio == 0.0);
    }
  }

  SUBCASE("single lag-3 entry") {
    Matrix cov = Matrix::Identity(6, 6) * 0.25;
    cov(1, 4) = cov(4, 1) = 0.5;
    const DecayReport r = decay_check(cov, 0.3, 0.5);
    CHECK_FALSE(r.pass);
    CHECK(r.max_offdiag == 0.5);
    CHECK(r.max_ratio == doctest::Approx(0.5 / (0.3 * 0.125)).epsilon(1e-14));
  }

  SUBCASE("diagonal is ignored and exact decay passes") {
    Matrix cov(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) cov(i, j) = 0.9 * std::pow(0.5, std::abs(i - j));
    cov.diagonal().setConstant(10.0);
    const DecayReport r = decay_check(cov);
    CHECK(r.pass);
    CHECK(r.max_ratio == doctest::Approx(0.9).epsilon(1e-14));
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(decay_check(Matrix::Zero(2, 3)), DataError);
    CHECK_THROWS_AS(decay_check(Matrix::Zero(2, 2), 1.0, 1.0), ConfigError);
    CHECK_THROWS_AS(decay_check(Matrix::Zero(2, 2), 1.0, 0.0), ConfigError);
    CHECK_THROWS_AS(decay_check(Matrix::Zero(2, 2), -1.0, 0.5), ConfigError);
  }
}

TEST_CASE("display transform") {
  Vector w(5);
  w << 1e-300, std::log(3.0), -std::log(3.0), 0.0, -2.0;
  const Vector t = w_display_transform(w);
  CHECK(t(0) >= 0.0);
  CHECK(t(0) < 1e-299);
  CHECK(t(1) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(t(2) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(t(3) == 0.0);
  CHECK(t(4) == doctest::Approx(-2.0 * (sigmoid(2.0) - 0.5)).epsilon(1e-14));

  SUBCASE("odd and strictly monotone") {
    const Vector grid = Vector::LinSpaced(2001, -30.0, 30.0);
    const Vector tg = w_display_transform(grid);
    for (Eigen::Index i = 1; i < grid.size(); ++i) CHECK(tg(i) > tg(i - 1));
    CHECK(w_display_transform(-grid) == -tg);
    CHECK(tg.cwiseAbs().maxCoeff() < 1.0);
  }

  SUBCASE("filtering on the transform gives the same rejections") {
    std::mt19937_64 gen(11);
    std::normal_distribution<double> noise(0.0, 3.0);
    int mismatches = 0;
    for (int it = 0; it < 10000; ++it) {
      const int p = 5 + it % 40;
      Vector v(p);
      for (int j = 0; j < p; ++j) {
        v(j) = noise(gen) + (j < p / 4 ? 4.0 : 0.0);
        if (v(j) == 0.0) v(j) = 1e-6;
      }
      const double q = 0.05 + 0.05 * (it % 6);
      if (threshold(v, q).rejected != threshold(w_display_transform(v), q).rejected) ++mismatches;
    }
    CHECK(mismatches == 0);
  }
}
