#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "abpanel/simulate.hpp"

using namespace abpanel;

TEST_CASE("dgp matches its declared moments in large samples") {
  SECTION("outcome is AR(1) when effects and feedback are off") {
    DgpConfig cfg;
    cfg.theta2 = 0.0;
    cfg.sigma_alpha = 0.0;
    cfg.sigma_gamma = 0.0;
    cfg.error_corr = 0.0;
    cfg.seed = 1;
    auto panel = simulate_dgp(cfg, 1000, 50);  // N*T = 50k
    const Matrix& y = panel.outcome();
    double num = 0.0, den = 0.0, mean = 0.0;
    for (int i = 0; i < 1000; ++i)
      for (int t = 0; t < 50; ++t) mean += y(i, t);
    mean /= 50000.0;
    for (int i = 0; i < 1000; ++i)
      for (int t = 1; t < 50; ++t) {
        num += (y(i, t) - mean) * (y(i, t - 1) - mean);
        den += (y(i, t - 1) - mean) * (y(i, t - 1) - mean);
      }
    CHECK(num / den == Catch::Approx(0.8).margin(0.05));
  }

  SECTION("rho = 0 makes the treatment white noise") {
    DgpConfig cfg;
    cfg.rho = 0.0;
    cfg.seed = 2;
    auto panel = simulate_dgp(cfg, 1000, 50);
    const Matrix& d = panel.regressors()[1].values;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 1000; ++i)
      for (int t = 1; t < 50; ++t) {
        num += d(i, t) * d(i, t - 1);
        den += d(i, t - 1) * d(i, t - 1);
      }
    CHECK(std::fabs(num / den) < 0.02);
  }

  SECTION("the error correlation shows up between v_t and e_{t-1}") {
    DgpConfig cfg;
    cfg.rho = 0.0;
    cfg.theta1 = 0.0;
    cfg.theta2 = 0.0;
    cfg.sigma_alpha = 0.0;
    cfg.sigma_gamma = 0.0;
    cfg.seed = 3;
    // with every coefficient off, y_t = e_t and d_t = v_t exactly
    auto panel = simulate_dgp(cfg, 1000, 51);
    const Matrix& y = panel.outcome();
    const Matrix& d = panel.regressors()[1].values;
    double sum = 0.0, sum_y2 = 0.0, sum_d2 = 0.0;
    long count = 0;
    for (int i = 0; i < 1000; ++i)
      for (int t = 1; t < 51; ++t) {
        sum += d(i, t) * y(i, t - 1);
        sum_y2 += y(i, t - 1) * y(i, t - 1);
        sum_d2 += d(i, t) * d(i, t);
        ++count;
      }
    const double corr = sum / std::sqrt(sum_y2 * sum_d2);
    CHECK(corr == Catch::Approx(0.5).margin(0.02));
    CHECK(count == 50000);
  }
}

TEST_CASE("simulate_dgp is deterministic in the seed and validates parameters") {
  DgpConfig cfg;
  cfg.seed = 10;
  auto a = simulate_dgp(cfg, 10, 5);
  auto b = simulate_dgp(cfg, 10, 5);
  CHECK(a.outcome() == b.outcome());
  CHECK(a.regressors()[1].values == b.regressors()[1].values);

  cfg.rho = 1.2;
  CHECK_THROWS_AS(simulate_dgp(cfg, 10, 5), Error);
}

TEST_CASE("the oracle estimator produces a perfect summary") {
  DgpConfig cfg;
  std::vector<EstimatorSpec> specs(1);
  specs[0].name = "oracle";
  specs[0].method = Method::Oracle;
  auto summary = monte_carlo(cfg, 20, 5, specs, 25, 7, 2);
  for (const auto& row : summary.rows) {
    CHECK(row.bias == 0.0);
    CHECK(row.rmse == 0.0);
    CHECK(row.coverage == 1.0);
    CHECK(row.n_reps == 25);
    CHECK(row.failures == 0);
  }
}

TEST_CASE("monte carlo summaries are identical across worker counts") {
  DgpConfig cfg;
  std::vector<EstimatorSpec> specs;
  {
    EstimatorSpec s;
    s.name = "ab-lasso";
    s.method = Method::ABLasso;
    specs.push_back(s);
  }
  {
    EstimatorSpec s;
    s.name = "ab-lasso-ss";
    s.method = Method::ABLassoSS;
    s.plan.k_folds = 2;
    s.plan.n_splits = 2;
    specs.push_back(s);
  }
  auto one = monte_carlo(cfg, 16, 5, specs, 6, 99, 1);
  auto four = monte_carlo(cfg, 16, 5, specs, 6, 99, 4);
  REQUIRE(one.rows.size() == four.rows.size());
  for (std::size_t r = 0; r < one.rows.size(); ++r) {
    CHECK(one.rows[r].bias == four.rows[r].bias);
    CHECK(one.rows[r].rmse == four.rows[r].rmse);
    CHECK(one.rows[r].coverage == four.rows[r].coverage);
    CHECK(one.rows[r].ci_length == four.rows[r].ci_length);
  }
  for (std::size_t r = 0; r < one.reps.size(); ++r) {
    REQUIRE(one.reps[r].ok == four.reps[r].ok);
    if (one.reps[r].ok) CHECK(one.reps[r].theta == four.reps[r].theta);
  }
}

TEST_CASE("rmse decomposes into bias and dispersion") {
  DgpConfig cfg;
  std::vector<EstimatorSpec> specs(1);
  specs[0].name = "ab-lasso";
  specs[0].method = Method::ABLasso;
  auto summary = monte_carlo(cfg, 18, 6, specs, 30, 4242, 2);
  for (const auto& row : summary.rows) {
    CHECK(row.rmse * row.rmse ==
          Catch::Approx(row.bias * row.bias + row.std_dev * row.std_dev).margin(1e-10));
    CHECK(row.coverage >= 0.0);
    CHECK(row.coverage <= 1.0);
  }
}

TEST_CASE("failed replications are recorded and never silently dropped") {
  DgpConfig cfg;
  std::vector<EstimatorSpec> specs(1);
  specs[0].name = "ab-lasso-ss";
  specs[0].method = Method::ABLassoSS;
  specs[0].plan.k_folds = 9;  // 18 units: folds of two, complements of 16
  auto summary = monte_carlo(cfg, 18, 5, specs, 4, 11, 1);
  for (const auto& row : summary.rows) CHECK(row.failures == 0);
  for (const auto& rec : summary.reps) CHECK(rec.ok);

  // a plan that cannot run leaves an error message per replication; with no
  // survivors the summary itself refuses to fabricate statistics
  specs[0].plan.k_folds = 10;
  CHECK_THROWS_AS(monte_carlo(cfg, 18, 5, specs, 4, 11, 1), Error);
}
