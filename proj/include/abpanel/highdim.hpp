#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "abpanel/core.hpp"
#include "abpanel/estimate.hpp"
#include "abpanel/panel.hpp"
#include "abpanel/simplex.hpp"

namespace abpanel {

/// Sparse weighting matrix orthogonalizing the low-dimensional instruments
/// against the high-dimensional block.
struct DantzigWeights {
  Matrix weights;     // d x d1
  double slack = 0.0; // achieved |M W - I|_max
  double l1_norm = 0.0;
  double tuning = 0.0;
};

/// Column-separable Dantzig selector: for j = 1..d1 solve
///   min |w|_1  subject to  |m_hat w - e_j|_inf <= ell
/// as a linear program over the split w = w+ - w-.
inline DantzigWeights dantzig_weights(const Matrix& m_hat, int d1, double ell) {
  const int d = static_cast<int>(m_hat.rows());
  require(m_hat.cols() == d, ErrorKind::ShapeError, "m_hat must be square");
  require(d1 >= 1 && d1 <= d, ErrorKind::BadParameter, "d1 outside 1..d");
  require(ell >= 0.0, ErrorKind::BadParameter, "negative Dantzig tuning");

  Matrix a(2 * d, 2 * d);
  a.topLeftCorner(d, d) = m_hat;
  a.topRightCorner(d, d) = -m_hat;
  a.bottomLeftCorner(d, d) = -m_hat;
  a.bottomRightCorner(d, d) = m_hat;
  const Vector cost = Vector::Ones(2 * d);

  DantzigWeights out;
  out.tuning = ell;
  out.weights.resize(d, d1);
  for (int j = 0; j < d1; ++j) {
    Vector b(2 * d);
    b.head(d) = Vector::Constant(d, ell);
    b.tail(d) = Vector::Constant(d, ell);
    b[j] += 1.0;
    b[d + j] -= 1.0;
    const LpSolution sol = solve_lp_min(a, b, cost);
    if (sol.status == LpSolution::Status::Infeasible)
      fail(ErrorKind::Infeasible, "Dantzig selector infeasible for column " + std::to_string(j));
    if (sol.status != LpSolution::Status::Optimal)
      fail(ErrorKind::Internal, "Dantzig LP unbounded for column " + std::to_string(j));
    out.weights.col(j) = sol.x.head(d) - sol.x.tail(d);
  }

  Matrix target = Matrix::Zero(d, d1);
  for (int j = 0; j < d1; ++j) target(j, j) = 1.0;
  out.slack = (m_hat * out.weights - target).cwiseAbs().maxCoeff();
  out.l1_norm = out.weights.cwiseAbs().sum();
  return out;
}

struct DantzigSummary {
  int period = 0;
  double tuning = 0.0;
  double slack = 0.0;
  double l1_norm = 0.0;
};

struct GeneralConfig {
  EstimatorConfig base{};
  double ell_scale = 0.5;         // ell_t = ell_scale * sqrt(log(max(d,N)) / N)
  bool ell_override = false;
  double ell_value = 0.0;
  bool cross_fit = false;
  CrossFitPlan plan{};
};

struct GeneralEstimateResult {
  EstimateResult result;
  std::vector<DantzigSummary> dantzig;
};

namespace detail {

struct GeneralParts {
  std::vector<int> x1, x2;
};

inline GeneralParts split_regressors(const PanelData& panel) {
  GeneralParts parts;
  for (int j = 0; j < panel.n_regressors(); ++j) {
    if (panel.regressors()[static_cast<std::size_t>(j)].mode == InstrumentMode::Project)
      parts.x1.push_back(j);
    else
      parts.x2.push_back(j);
  }
  require(!parts.x1.empty(), ErrorKind::BadParameter,
          "general estimator needs at least one projected regressor");
  return parts;
}

inline double general_ell(const GeneralConfig& cfg, int d, int n) {
  if (cfg.ell_override) return cfg.ell_value;
  return cfg.ell_scale * std::sqrt(std::log(static_cast<double>(std::max(d, n))) /
                                   static_cast<double>(n));
}

/// Fills the weighted-instrument series W_t' U_it for the rows `block` of the
/// output matrices, along with the X1/outcome blocks, using first-stage fits
/// and the Dantzig weights computed on `fit_subset`.
inline void fill_general_block(const PanelData& panel, const GeneralParts& parts,
                               const std::vector<int>& block, const std::vector<int>& fit_subset,
                               const GeneralConfig& cfg, Eigen::Index row_offset,
                               std::vector<Matrix>& wpred, std::vector<Matrix>& dx1, Matrix& dy,
                               std::vector<DantzigSummary>* diag) {
  const int d = panel.n_regressors();
  const int d1 = static_cast<int>(parts.x1.size());
  const int t_periods = panel.n_periods();

  const FirstStageFits fits = fit_first_stage(panel, fit_subset, cfg.base.first_stage);
  const TransformedPanel tp_fit = difference_and_demean(panel, fit_subset, true);
  const std::vector<Matrix> u_fit = predict_instruments(panel, fits, fit_subset, tp_fit);

  const TransformedPanel tp_block = difference_and_demean(panel, block, true);
  const std::vector<Matrix> u_block = predict_instruments(panel, fits, block, tp_block);

  const double ell = general_ell(cfg, d, static_cast<int>(fit_subset.size()));
  const int nfit = static_cast<int>(fit_subset.size());
  Matrix xt(nfit, d), ut(nfit, d);

  for (int t = 2; t <= t_periods; ++t) {
    const int k = t - 2;
    for (int j = 0; j < d; ++j) {
      xt.col(j) = tp_fit.diff_regressors[static_cast<std::size_t>(j)].col(k);
      ut.col(j) = u_fit[static_cast<std::size_t>(j)].col(k);
    }
    const Matrix m_hat = xt.transpose() * ut / static_cast<double>(nfit);

    Matrix w_t;
    DantzigSummary ds;
    ds.period = t;
    if (parts.x2.empty()) {
      w_t = Matrix::Identity(d, d1);  // nothing to partial out
      ds.slack = 0.0;
      ds.l1_norm = static_cast<double>(d1);
      ds.tuning = 0.0;
    } else {
      try {
        DantzigWeights dw = dantzig_weights(m_hat, d1, ell);
        w_t = std::move(dw.weights);
        ds.slack = dw.slack;
        ds.l1_norm = dw.l1_norm;
        ds.tuning = dw.tuning;
      } catch (const Error& e) {
        fail(e.kind(), "period t=" + std::to_string(t) + ": " + e.what());
      }
    }
    if (diag) diag->push_back(ds);

    Matrix ub(static_cast<int>(block.size()), d);
    for (int j = 0; j < d; ++j) ub.col(j) = u_block[static_cast<std::size_t>(j)].col(k);
    const Matrix p = ub * w_t;  // |block| x d1
    for (int r = 0; r < d1; ++r)
      wpred[static_cast<std::size_t>(r)].col(k).segment(row_offset,
                                                        static_cast<Eigen::Index>(block.size())) =
          p.col(r);
  }

  for (int r = 0; r < d1; ++r)
    dx1[static_cast<std::size_t>(r)].middleRows(row_offset, static_cast<Eigen::Index>(block.size())) =
        tp_block.diff_regressors[static_cast<std::size_t>(parts.x1[static_cast<std::size_t>(r)])];
  dy.middleRows(row_offset, static_cast<Eigen::Index>(block.size())) = tp_block.diff_outcome;
}

}  // namespace detail

/// Estimator for the model with a low-dimensional block of projected
/// regressors X1 and a high-dimensional self-instrumenting block X2. The X2
/// effect is partialled out through Dantzig-selector weighting matrices; with
/// no X2 columns the estimator coincides with ab_lasso. Residuals keep the X2
/// contribution, so the reported score covariance is the realized clustered
/// one.
inline GeneralEstimateResult general_estimate(const PanelData& panel,
                                              const GeneralConfig& cfg = {}) {
  const detail::GeneralParts parts = detail::split_regressors(panel);
  const int d1 = static_cast<int>(parts.x1.size());
  const int n = panel.n_units();
  const int t_periods = panel.n_periods();

  GeneralEstimateResult out;
  EstimateResult& res = out.result;
  res.method = Method::GeneralHighDim;
  res.confidence = cfg.base.confidence;
  for (int j : parts.x1)
    res.coefficient_names.push_back(panel.regressors()[static_cast<std::size_t>(j)].name);

  auto alloc = [&](std::vector<Matrix>& v) {
    v.assign(static_cast<std::size_t>(d1), Matrix::Zero(n, t_periods - 1));
  };

  if (!cfg.cross_fit) {
    std::vector<Matrix> wpred, dx1;
    Matrix dy(n, t_periods - 1);
    alloc(wpred);
    alloc(dx1);
    detail::fill_general_block(panel, parts, panel.all_units(), panel.all_units(), cfg, 0, wpred,
                               dx1, dy, &out.dantzig);
    res.theta = iv_second_stage(wpred, dx1, dy);
    res.residuals = dy;
    for (int r = 0; r < d1; ++r)
      res.residuals.noalias() -= dx1[static_cast<std::size_t>(r)] * res.theta[r];
    res.covariance = sandwich_covariance(wpred, dx1, res.residuals, t_periods);
    detail::finish_result(res);
    return out;
  }

  validate_plan(cfg.plan, n);
  res.k_folds = cfg.plan.k_folds;
  res.n_splits = cfg.plan.n_splits;
  res.seed = cfg.plan.seed;
  Matrix split_estimates(d1, cfg.plan.n_splits);
  for (int s = 0; s < cfg.plan.n_splits; ++s) {
    Rng rng(derive_seed(cfg.plan.seed, static_cast<std::uint64_t>(s)));
    const auto folds = make_folds(n, cfg.plan.k_folds, rng);
    std::vector<Matrix> wpred, dx1;
    Matrix dy(n, t_periods - 1);
    alloc(wpred);
    alloc(dx1);
    Eigen::Index offset = 0;
    for (const auto& fold : folds) {
      require(fold.size() >= 2, ErrorKind::BadPlan, "fold has fewer than 2 units");
      const std::vector<int> aux = detail::complement_of(fold, n);
      detail::fill_general_block(panel, parts, fold, aux, cfg, offset, wpred, dx1, dy,
                                 s + 1 == cfg.plan.n_splits ? &out.dantzig : nullptr);
      offset += static_cast<Eigen::Index>(fold.size());
    }
    split_estimates.col(s) = iv_second_stage(wpred, dx1, dy);
  }
  res.theta.resize(d1);
  for (int r = 0; r < d1; ++r) {
    if (cfg.plan.aggregation == Aggregation::Mean) {
      res.theta[r] = split_estimates.row(r).mean();
    } else {
      std::vector<double> v(static_cast<std::size_t>(cfg.plan.n_splits));
      for (int s = 0; s < cfg.plan.n_splits; ++s)
        v[static_cast<std::size_t>(s)] = split_estimates(r, s);
      res.theta[r] = detail::median_of(std::move(v));
    }
  }

  // variance from a full-sample pass at the aggregated estimate
  std::vector<Matrix> wpred, dx1;
  Matrix dy(n, t_periods - 1);
  alloc(wpred);
  alloc(dx1);
  std::vector<DantzigSummary> full_diag;
  detail::fill_general_block(panel, parts, panel.all_units(), panel.all_units(), cfg, 0, wpred,
                             dx1, dy, &full_diag);
  res.residuals = dy;
  for (int r = 0; r < d1; ++r)
    res.residuals.noalias() -= dx1[static_cast<std::size_t>(r)] * res.theta[r];
  res.covariance = sandwich_covariance(wpred, dx1, res.residuals, t_periods);
  detail::finish_result(res);
  return out;
}

}  // namespace abpanel
