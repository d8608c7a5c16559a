#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "abpanel/core.hpp"
#include "abpanel/estimate.hpp"
#include "abpanel/gmm.hpp"
#include "abpanel/panel.hpp"

namespace abpanel {

/// Dynamic panel DGP: Y_it = a_i + g_t + theta1 Y_{i,t-1} + theta2 D_it + e_it
/// with D_it = rho D_{i,t-1} + v_it and corr(e_{i,t-1}, v_it) = error_corr.
struct DgpConfig {
  double rho = 0.5;
  double theta1 = 0.8;
  double theta2 = 1.0;
  double sigma_alpha = 1.0;
  double sigma_gamma = 1.0;
  double error_corr = 0.5;
  int burn_in = 10;
  std::uint64_t seed = 0;
};

inline void validate_dgp(const DgpConfig& cfg) {
  require(std::fabs(cfg.rho) < 1.0, ErrorKind::BadParameter, "|rho| must be below 1");
  require(std::fabs(cfg.theta1) < 1.0, ErrorKind::BadParameter, "|theta1| must be below 1");
  require(cfg.burn_in >= 0, ErrorKind::BadParameter, "negative burn-in");
  require(cfg.sigma_alpha >= 0.0 && cfg.sigma_gamma >= 0.0, ErrorKind::BadParameter,
          "negative effect standard deviation");
  require(std::fabs(cfg.error_corr) <= 1.0, ErrorKind::BadParameter, "|error_corr| above 1");
}

/// Simulates the process from zero initial values through burn_in + T periods
/// and returns the last T as a panel. The outcome value just before the
/// window is kept so the first-lag regressor is defined at t = 1, but it is
/// marked unobserved for instrument purposes, matching a sample whose outcome
/// is first seen at t = 1.
inline PanelData simulate_dgp(const DgpConfig& cfg, int n_units, int t_periods) {
  validate_dgp(cfg);
  require(n_units >= 2 && t_periods >= 3, ErrorKind::BadParameter, "need N >= 2 and T >= 3");
  Rng rng(cfg.seed);

  const int total = cfg.burn_in + t_periods;
  Vector alpha(n_units);
  for (int i = 0; i < n_units; ++i) alpha[i] = cfg.sigma_alpha * rng.normal();
  Vector gamma(total + 1);
  gamma[0] = 0.0;  // never enters the window
  for (int t = 1; t <= total; ++t) gamma[t] = cfg.sigma_gamma * rng.normal();

  const double cross = cfg.error_corr;
  const double resid_sd = std::sqrt(std::max(0.0, 1.0 - cross * cross));

  Matrix y_all(n_units, total + 1), d_all(n_units, total + 1);
  for (int i = 0; i < n_units; ++i) {
    double y = 0.0, d = 0.0;
    y_all(i, 0) = 0.0;
    d_all(i, 0) = 0.0;
    // pair tau carries (eps_{tau-1}, v_tau); one extra pair supplies eps_total
    std::vector<double> eps(static_cast<std::size_t>(total) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(total) + 1, 0.0);
    for (int tau = 1; tau <= total + 1; ++tau) {
      const double z1 = rng.normal();
      const double z2 = rng.normal();
      if (tau - 1 >= 1 && tau - 1 <= total) eps[static_cast<std::size_t>(tau - 1)] = z1;
      if (tau <= total) v[static_cast<std::size_t>(tau)] = cross * z1 + resid_sd * z2;
    }
    for (int tau = 1; tau <= total; ++tau) {
      d = cfg.rho * d + v[static_cast<std::size_t>(tau)];
      y = alpha[i] + gamma[tau] + cfg.theta1 * y + cfg.theta2 * d +
          eps[static_cast<std::size_t>(tau)];
      y_all(i, tau) = y;
      d_all(i, tau) = d;
    }
  }

  const int start = cfg.burn_in + 1;  // window = periods start..total
  Matrix outcome = y_all.middleCols(start, t_periods);
  Matrix history = y_all.col(start - 1);
  std::vector<RegressorColumn> cols(2);
  cols[0].name = "y_l1";
  cols[0].mode = InstrumentMode::Project;
  cols[0].outcome_lag = 1;
  cols[1].name = "d";
  cols[1].mode = InstrumentMode::Project;
  cols[1].values = d_all.middleCols(start, t_periods);
  return PanelData(std::move(outcome), std::move(cols), std::move(history), 1);
}

/// One estimator entry in a Monte Carlo run.
struct EstimatorSpec {
  std::string name;
  Method method = Method::ABLasso;
  CrossFitPlan plan{};
  EstimatorConfig config{};
  GmmConfig gmm{};
};

struct MonteCarloRow {
  std::string estimator;
  int coefficient = 0;
  std::string coefficient_name;
  double true_value = 0.0;
  int n_reps = 0;
  int failures = 0;
  double rmse = 0.0, std_dev = 0.0, bias = 0.0, ci_length = 0.0, coverage = 0.0;
};

struct RepRecord {
  int rep = 0;
  std::string estimator;
  bool ok = false;
  std::string error;
  Vector theta;
  Vector std_errors;
  Vector ci_lower, ci_upper;
};

struct MonteCarloSummary {
  std::vector<MonteCarloRow> rows;
  std::vector<RepRecord> reps;  // ordered by (rep, estimator)
  int n_reps = 0;
  bool failure_warning = false;  // more than 1% of estimator runs failed
};

inline EstimateResult run_estimator(const PanelData& panel, const EstimatorSpec& spec,
                                    const Vector& truth) {
  switch (spec.method) {
    case Method::ABLasso:
      return ab_lasso(panel, spec.config);
    case Method::ABLassoSS:
      return ab_lasso_ss(panel, spec.plan, spec.config);
    case Method::ABGMM:
      return ab_gmm_two_step(panel, spec.gmm);
    case Method::DABSS:
      return dab_ss(panel, spec.plan.seed, spec.gmm);
    case Method::Oracle: {
      EstimateResult res;
      res.method = Method::Oracle;
      res.coefficient_names = panel.regressor_names();
      res.theta = truth;
      res.covariance = Matrix::Identity(truth.size(), truth.size());
      res.confidence = spec.config.confidence;
      res.residuals = Matrix::Zero(panel.n_units(), panel.n_periods() - 1);
      detail::finish_result(res);
      return res;
    }
    case Method::GeneralHighDim:
      fail(ErrorKind::BadParameter, "the general estimator is not part of the DGP harness");
  }
  fail(ErrorKind::Internal, "unknown estimator method");
}

/// Runs n_reps independent replications, parallel over reps with per-rep
/// seeds derived from (master_seed, rep), so results do not depend on the
/// worker count. Failed replications are recorded and excluded from the
/// summary statistics.
inline MonteCarloSummary monte_carlo(const DgpConfig& cfg, int n_units, int t_periods,
                                     const std::vector<EstimatorSpec>& specs, int n_reps,
                                     std::uint64_t master_seed, int threads = 0) {
  validate_dgp(cfg);
  require(n_reps >= 1, ErrorKind::BadParameter, "n_reps must be positive");
  require(!specs.empty(), ErrorKind::BadParameter, "no estimator specs");

  Vector truth(2);
  truth << cfg.theta1, cfg.theta2;

  const std::size_t n_specs = specs.size();
  std::vector<RepRecord> records(static_cast<std::size_t>(n_reps) * n_specs);

  auto run_rep = [&](int rep) {
    DgpConfig rep_cfg = cfg;
    rep_cfg.seed = derive_seed(master_seed, static_cast<std::uint64_t>(rep));
    const PanelData panel = simulate_dgp(rep_cfg, n_units, t_periods);
    for (std::size_t s = 0; s < n_specs; ++s) {
      EstimatorSpec spec = specs[s];
      spec.plan.seed = derive_seed(rep_cfg.seed, 1000 + s);
      RepRecord& rec = records[static_cast<std::size_t>(rep) * n_specs + s];
      rec.rep = rep;
      rec.estimator = spec.name;
      try {
        const EstimateResult res = run_estimator(panel, spec, truth);
        rec.ok = true;
        rec.theta = res.theta;
        rec.std_errors = res.std_errors;
        rec.ci_lower = res.ci_lower;
        rec.ci_upper = res.ci_upper;
      } catch (const Error& e) {
        rec.ok = false;
        rec.error = e.what();
      }
    }
  };

  int n_workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  n_workers = std::max(1, std::min(n_workers, n_reps));
  if (n_workers == 1) {
    for (int rep = 0; rep < n_reps; ++rep) run_rep(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w)
      pool.emplace_back([&]() {
        for (int rep = next.fetch_add(1); rep < n_reps; rep = next.fetch_add(1)) run_rep(rep);
      });
    for (auto& th : pool) th.join();
  }

  MonteCarloSummary summary;
  summary.n_reps = n_reps;
  summary.reps = std::move(records);

  const std::vector<std::string> coef_names = {"y_l1", "d"};
  long total_failures = 0;
  for (std::size_t s = 0; s < n_specs; ++s) {
    for (int j = 0; j < truth.size(); ++j) {
      MonteCarloRow row;
      row.estimator = specs[s].name;
      row.coefficient = j;
      row.coefficient_name = coef_names[static_cast<std::size_t>(j)];
      row.true_value = truth[j];
      double sum_err = 0.0, sum_sq = 0.0, sum_len = 0.0;
      long covered = 0;
      int used = 0, failed = 0;
      for (int rep = 0; rep < n_reps; ++rep) {
        const RepRecord& rec = summary.reps[static_cast<std::size_t>(rep) * n_specs + s];
        if (!rec.ok) {
          ++failed;
          continue;
        }
        const double err = rec.theta[j] - truth[j];
        sum_err += err;
        sum_sq += err * err;
        sum_len += rec.ci_upper[j] - rec.ci_lower[j];
        if (rec.ci_lower[j] <= truth[j] && truth[j] <= rec.ci_upper[j]) ++covered;
        ++used;
      }
      require(used > 0, ErrorKind::Internal,
              "all replications failed for estimator '" + specs[s].name + "'");
      row.n_reps = used;
      row.failures = failed;
      row.bias = sum_err / used;
      row.rmse = std::sqrt(sum_sq / used);
      row.std_dev = std::sqrt(std::max(0.0, sum_sq / used - row.bias * row.bias));
      row.ci_length = sum_len / used;
      row.coverage = static_cast<double>(covered) / used;
      summary.rows.push_back(std::move(row));
      if (j == 0) total_failures += failed;
    }
  }
  summary.failure_warning =
      static_cast<double>(total_failures) > 0.01 * static_cast<double>(n_reps) * n_specs;
  return summary;
}

}  // namespace abpanel
