#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "abpanel/lasso.hpp"
#include "oracle_helpers.hpp"

using namespace abpanel;

namespace {

Matrix random_design(Rng& rng, int n, int m) {
  Matrix x(n, m);
  x.col(0).setOnes();
  for (int j = 1; j < m; ++j)
    for (int i = 0; i < n; ++i) x(i, j) = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("default_penalty matches the quantile formula") {
  // frozen from a high-precision quantile oracle
  CHECK(default_penalty(100, 1, 1.0, 0.1) == Catch::Approx(32.897072539029454).epsilon(1e-12));
  CHECK(default_penalty(100, 50, 1.0, 0.1) == Catch::Approx(61.80464612335627).epsilon(1e-12));
  CHECK(default_penalty(100, 7, 0.0, 0.1) == 0.0);

  // cross-check against an independent bisection oracle on the CDF
  for (int m : {1, 3, 20, 200}) {
    const double expected = 2.0 * std::sqrt(57.0) * oracle::normal_quantile_bisect(1.0 - 0.1 / (2.0 * m));
    CHECK(default_penalty(57, m) == Catch::Approx(expected).margin(1e-9));
  }
  CHECK_THROWS_AS(default_penalty(10, 1, 1.0, 1.5), Error);
  CHECK_THROWS_AS(default_penalty(10, 0), Error);
}

TEST_CASE("huge penalty zeroes every slope and fits the mean") {
  Rng rng(1);
  const Matrix x = random_design(rng, 40, 5);
  Vector y(40);
  for (int i = 0; i < 40; ++i) y[i] = 3.0 + rng.normal();
  Vector w = Vector::Ones(5);
  w[0] = 0.0;
  auto fit = solve_weighted_lasso(x, y, 1e12 * 40.0, w);
  CHECK(fit.support.empty());
  CHECK(fit.coefficients.tail(4).cwiseAbs().maxCoeff() == 0.0);
  CHECK(fit.coefficients[0] == Catch::Approx(y.mean()).margin(1e-10));
}

TEST_CASE("zero penalty reproduces OLS on a full-rank design") {
  Rng rng(2);
  const Matrix x = random_design(rng, 60, 4);
  Vector beta(4);
  beta << 1.0, -2.0, 0.5, 3.0;
  Vector y = x * beta;
  for (int i = 0; i < 60; ++i) y[i] += 0.3 * rng.normal();
  Vector w = Vector::Ones(4);
  w[0] = 0.0;
  auto fit = solve_weighted_lasso(x, y, 0.0, w, {1e-12, 100000});
  const Vector ols = oracle::ols_normal_equations(x, y);
  CHECK((fit.coefficients - ols).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("objective at the solution beats a grid around it") {
  Rng rng(3);
  const Matrix x = random_design(rng, 50, 3);
  Vector y(50);
  for (int i = 0; i < 50; ++i) y[i] = 1.0 + 0.8 * x(i, 1) + rng.normal();
  Vector w = Vector::Ones(3);
  w[0] = 0.0;
  const double lambda = 20.0;
  auto fit = solve_weighted_lasso(x, y, lambda, w);
  const double at_solution = oracle::lasso_objective(x, y, fit.coefficients, lambda, w);
  CHECK(fit.objective_value == Catch::Approx(at_solution).epsilon(1e-10));
  for (int a = 0; a < 20; ++a)
    for (int b = 0; b < 20; ++b)
      for (int c = 0; c < 20; ++c) {
        Vector probe = fit.coefficients;
        probe[0] += -0.1 + 0.2 * a / 19.0;
        probe[1] += -0.1 + 0.2 * b / 19.0;
        probe[2] += -0.1 + 0.2 * c / 19.0;
        CHECK(at_solution <= oracle::lasso_objective(x, y, probe, lambda, w) + 1e-12);
      }
}

TEST_CASE("KKT certificate holds on random instances") {
  Rng rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 20 + static_cast<int>(rng.below(100));
    const int m = 2 + static_cast<int>(rng.below(20));
    const Matrix x = random_design(rng, n, m);
    Vector y(n);
    for (int i = 0; i < n; ++i) y[i] = rng.normal() * 2.0;
    Vector w = Vector::Ones(m);
    w[0] = 0.0;
    for (int j = 1; j < m; ++j) w[j] = 0.5 + rng.uniform();
    const double lambda = default_penalty(n, m) * (0.1 + rng.uniform());
    auto fit = solve_weighted_lasso(x, y, lambda, w);
    CHECK(kkt_gap(x, y, fit) < 1e-6);
  }
}

TEST_CASE("scaling response and penalty together scales the coefficients") {
  Rng rng(5);
  const Matrix x = random_design(rng, 30, 4);
  Vector y(30);
  for (int i = 0; i < 30; ++i) y[i] = rng.normal();
  Vector w = Vector::Ones(4);
  w[0] = 0.0;
  const double lambda = 8.0, k = 3.5;
  auto base = solve_weighted_lasso(x, y, lambda, w, {1e-12, 100000});
  auto scaled = solve_weighted_lasso(x, (k * y).eval(), k * lambda, w, {1e-12, 100000});
  CHECK((scaled.coefficients - k * base.coefficients).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("objective is nonincreasing across sweeps") {
  Rng rng(6);
  const Matrix x = random_design(rng, 40, 6);
  Vector y(40);
  for (int i = 0; i < 40; ++i) y[i] = rng.normal();
  Vector w = Vector::Ones(6);
  w[0] = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (int sweeps = 1; sweeps <= 12; ++sweeps) {
    LassoFit fit;
    try {
      fit = solve_weighted_lasso(x, y, 15.0, w, {1e-16, sweeps});
    } catch (const ConvergenceError& e) {
      fit = e.last_iterate;  // capped sweep budget: inspect the iterate
    }
    CHECK(fit.objective_value <= prev + 1e-10);
    prev = fit.objective_value;
  }
}

TEST_CASE("solution matches exhaustive sign enumeration for small designs") {
  Rng rng(7);
  for (int rep = 0; rep < 40; ++rep) {
    const int m_slopes = 1 + static_cast<int>(rng.below(3));
    const Matrix x = random_design(rng, 25, m_slopes + 1);
    Vector y(25);
    for (int i = 0; i < 25; ++i) y[i] = rng.normal() * 1.5;
    Vector w = Vector::Ones(m_slopes + 1);
    w[0] = 0.0;
    const double lambda = (0.2 + rng.uniform()) * 15.0;
    auto fit = solve_weighted_lasso(x, y, lambda, w);
    const Vector brute = oracle::lasso_sign_enumeration(x, y, lambda, w);
    REQUIRE(brute.size() == fit.coefficients.size());
    CHECK((fit.coefficients - brute).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("post_lasso_refit restricts to the support") {
  Rng rng(8);
  const Matrix x = random_design(rng, 30, 4);
  Vector y(30);
  for (int i = 0; i < 30; ++i) y[i] = 2.0 - x(i, 2) + 0.1 * rng.normal();

  auto full = post_lasso_refit(x, y, {1, 2, 3});
  CHECK((full.coefficients - oracle::ols_normal_equations(x, y)).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(full.post_refit);

  auto empty = post_lasso_refit(x, y, {});
  CHECK(empty.coefficients[0] == Catch::Approx(y.mean()).margin(1e-12));
  CHECK(empty.coefficients.tail(3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("post_lasso_refit returns the minimum-norm answer on duplicated columns") {
  Rng rng(9);
  Matrix x = random_design(rng, 25, 4);
  x.col(3) = x.col(2);  // exact duplicate
  Vector y(25);
  for (int i = 0; i < 25; ++i) y[i] = x(i, 2) + 0.05 * rng.normal();
  auto fit = post_lasso_refit(x, y, {2, 3});
  CHECK(fit.coefficients.allFinite());
  // pseudo-inverse oracle on the restricted design
  Matrix restricted(25, 3);
  restricted << x.col(0), x.col(2), x.col(3);
  const Vector expected =
      restricted.completeOrthogonalDecomposition().pseudoInverse() * y;
  CHECK(fit.coefficients[0] == Catch::Approx(expected[0]).margin(1e-8));
  CHECK(fit.coefficients[2] == Catch::Approx(expected[1]).margin(1e-8));
  CHECK(fit.coefficients[3] == Catch::Approx(expected[2]).margin(1e-8));
}

TEST_CASE("predict is the design-coefficient product") {
  Rng rng(10);
  const Matrix xa = random_design(rng, 20, 3);
  const Matrix xb = random_design(rng, 15, 3);
  Vector y(20);
  for (int i = 0; i < 20; ++i) y[i] = rng.normal();
  Vector w = Vector::Ones(3);
  w[0] = 0.0;
  auto fit = solve_weighted_lasso(xa, y, 1.0, w);

  LassoFit zero = fit;
  zero.coefficients.setZero();
  CHECK(predict(zero, xb).cwiseAbs().maxCoeff() == 0.0);

  LassoFit ident = fit;
  ident.coefficients << 0.0, 1.0, 0.0;
  CHECK((predict(ident, xb) - xb.col(1)).cwiseAbs().maxCoeff() == 0.0);

  CHECK((predict(fit, xb) - xb * fit.coefficients).cwiseAbs().maxCoeff() < 1e-14);
  Matrix wrong(4, 4);
  CHECK_THROWS_AS(predict(fit, wrong), Error);
}

TEST_CASE("solver reports shape errors") {
  Matrix x(5, 2);
  Vector y(4);
  Vector w = Vector::Zero(2);
  CHECK_THROWS_AS(solve_weighted_lasso(x, y, 1.0, w), Error);
}
