#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "abpanel/core.hpp"
#include "abpanel/estimate.hpp"
#include "abpanel/panel.hpp"

namespace abpanel {

enum class Step2Weighting {
  ClusteredScores,  // (sum_i u_i u_i')^{-1}, pseudoinverse when m > n
  PerPeriodRobust,  // block-diagonal (sum_i z_it z_it' de_it^2)^{-1} per period
};

enum class Step1Weighting {
  HMatrix,         // (sum_i Z_i' H Z_i)^{-1}, H the first-difference MA(1) band
  InstrumentGram,  // block-diagonal (sum_i z_it z_it')^{-1}, 2SLS-style
};

struct GmmConfig {
  long moment_cap = 10000;
  double confidence = 0.95;
  bool two_step = true;  // false: stop at the first step with robust SEs
  Step1Weighting step1 = Step1Weighting::HMatrix;
  Step2Weighting step2 = Step2Weighting::ClusteredScores;
  int reweighting_rounds = 1;  // >1: iterate the weighted step
};

namespace detail {

/// Per-period instrument blocks Z_t (constant dropped) over a unit subset,
/// plus the stacked cross moments A = sum_i Z_i' dX_i and b = sum_i Z_i' dy_i.
struct GmmMoments {
  std::vector<Matrix> z;         // per period: n x (m_t - 1)
  std::vector<int> offset;       // column offset of each period block
  long m = 0;                    // total moment count
  Matrix a;                      // m x d
  Vector b;                      // m
};

inline GmmMoments build_gmm_moments(const PanelData& panel, const std::vector<int>& subset,
                                    const TransformedPanel& tp, long moment_cap) {
  GmmMoments g;
  const int t_periods = panel.n_periods();
  const int d = panel.n_regressors();
  for (int t = 2; t <= t_periods; ++t) {
    InstrumentMatrix vt = build_instrument_matrix(panel, t, subset);
    g.offset.push_back(static_cast<int>(g.m));
    g.z.push_back(vt.values.rightCols(vt.m_t() - 1));
    g.m += vt.m_t() - 1;
  }
  require(g.m >= d, ErrorKind::BadParameter, "fewer moments than parameters");
  require(g.m <= moment_cap, ErrorKind::BadParameter,
          "moment count " + std::to_string(g.m) + " exceeds cap " + std::to_string(moment_cap));

  g.a = Matrix::Zero(g.m, d);
  g.b = Vector::Zero(g.m);
  for (int k = 0; k < t_periods - 1; ++k) {
    const Matrix& zt = g.z[static_cast<std::size_t>(k)];
    const int off = g.offset[static_cast<std::size_t>(k)];
    const int mt = static_cast<int>(zt.cols());
    for (int j = 0; j < d; ++j)
      g.a.block(off, j, mt, 1).noalias() +=
          zt.transpose() * tp.diff_regressors[static_cast<std::size_t>(j)].col(k);
    g.b.segment(off, mt).noalias() += zt.transpose() * tp.diff_outcome.col(k);
  }
  return g;
}

/// sum_i Z_i' H Z_i with H the first-difference MA(1) matrix
/// (2 on the diagonal, -1 off the diagonal).
inline Matrix h_weighting_moments(const GmmMoments& g) {
  Matrix m1 = Matrix::Zero(g.m, g.m);
  const int k_max = static_cast<int>(g.z.size());
  for (int k = 0; k < k_max; ++k) {
    const Matrix& zt = g.z[static_cast<std::size_t>(k)];
    const int off = g.offset[static_cast<std::size_t>(k)];
    const int mt = static_cast<int>(zt.cols());
    m1.block(off, off, mt, mt).noalias() += 2.0 * (zt.transpose() * zt);
    if (k + 1 < k_max) {
      const Matrix& znext = g.z[static_cast<std::size_t>(k + 1)];
      const int off2 = g.offset[static_cast<std::size_t>(k + 1)];
      const int mt2 = static_cast<int>(znext.cols());
      const Matrix cross = zt.transpose() * znext;
      m1.block(off, off2, mt, mt2).noalias() -= cross;
      m1.block(off2, off, mt2, mt).noalias() -= cross.transpose();
    }
  }
  return m1;
}

/// Per-unit scores u_i = Z_i' de_i stacked as rows (n x m).
inline Matrix unit_scores(const GmmMoments& g, const Matrix& resid) {
  const int n = static_cast<int>(resid.rows());
  Matrix u = Matrix::Zero(n, g.m);
  for (std::size_t k = 0; k < g.z.size(); ++k) {
    const int off = g.offset[k];
    const int mt = static_cast<int>(g.z[k].cols());
    u.middleCols(off, mt) =
        g.z[k].array().colwise() * resid.col(static_cast<Eigen::Index>(k)).array();
  }
  return u;
}

/// Solves M x = rhs by Cholesky, falling back to a ridge of
/// 1e-10 * trace/m when M is numerically singular.
struct WeightedSolve {
  Matrix solution;
  bool regularized = false;
};

inline WeightedSolve solve_weighting(Matrix m, const Matrix& rhs) {
  WeightedSolve out;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success) {
    out.solution = llt.solve(rhs);
    return out;
  }
  const double ridge = 1e-10 * m.trace() / static_cast<double>(m.rows());
  require(std::isfinite(ridge) && ridge > 0.0, ErrorKind::SingularDesign,
          "weighting matrix is singular and has no usable scale");
  m.diagonal().array() += ridge;
  Eigen::LDLT<Matrix> ldlt(m);
  require(ldlt.info() == Eigen::Success, ErrorKind::SingularDesign,
          "weighting matrix remained singular after ridge");
  out.solution = ldlt.solve(rhs);
  out.regularized = true;
  return out;
}

inline Vector solve_small(const Matrix& lhs, const Vector& rhs) {
  Eigen::ColPivHouseholderQR<Matrix> qr(lhs);
  const auto& r = qr.matrixR();
  const int d = static_cast<int>(lhs.rows());
  const double r0 = std::fabs(r(0, 0));
  const double rd = std::fabs(r(d - 1, d - 1));
  require(rd > 0.0 && r0 / rd < 1e12, ErrorKind::SingularDesign,
          "GMM normal equations numerically singular");
  return qr.solve(rhs);
}

}  // namespace detail

/// Conventional two-step Arellano-Bond GMM on a unit subset. Step one weights
/// by (sum Z'HZ)^{-1}; step two by the inverse clustered score covariance,
/// computed through its n x n Gram factor when the moment count exceeds the
/// number of units (the score matrix then has deficient rank and the
/// pseudoinverse is the meaningful inverse). Standard errors come from the
/// step-two clustered sandwich.
inline EstimateResult ab_gmm_two_step_on(const PanelData& panel, const std::vector<int>& subset,
                                         const GmmConfig& cfg = {}) {
  const TransformedPanel tp = difference_and_demean(panel, subset, true);
  const detail::GmmMoments g = detail::build_gmm_moments(panel, subset, tp, cfg.moment_cap);
  const int d = panel.n_regressors();
  const int n = static_cast<int>(subset.size());

  EstimateResult res;
  res.coefficient_names = panel.regressor_names();
  res.method = Method::ABGMM;
  res.moment_count = g.m;
  res.confidence = cfg.confidence;

  // step 1
  Matrix rhs(g.m, d + 1);
  rhs.leftCols(d) = g.a;
  rhs.col(d) = g.b;
  Matrix wa1;  // W1 [A b]
  if (cfg.step1 == Step1Weighting::HMatrix) {
    Matrix m1 = detail::h_weighting_moments(g);
    detail::WeightedSolve w1 = detail::solve_weighting(std::move(m1), rhs);
    res.weighting_regularized = w1.regularized;
    wa1 = std::move(w1.solution);
  } else {
    wa1.resize(g.m, d + 1);
    for (std::size_t k = 0; k < g.z.size(); ++k) {
      const int off = g.offset[k];
      const int mt = static_cast<int>(g.z[k].cols());
      detail::WeightedSolve wb = detail::solve_weighting(
          g.z[k].transpose() * g.z[k], rhs.middleRows(off, mt));
      res.weighting_regularized = res.weighting_regularized || wb.regularized;
      wa1.middleRows(off, mt) = wb.solution;
    }
  }
  {
    const Matrix lhs = g.a.transpose() * wa1.leftCols(d);
    res.theta = detail::solve_small(lhs, g.a.transpose() * wa1.col(d));
  }

  // step 2
  Matrix resid = detail::residual_matrix(tp, res.theta);
  Matrix u = detail::unit_scores(g, resid);
  const double score_scale = u.squaredNorm();
  if (score_scale <= 1e-24 * (1.0 + g.b.squaredNorm())) {
    // structurally noiseless panel: step 1 already solves the moments exactly
    res.residuals = std::move(resid);
    res.covariance = Matrix::Zero(d, d);
    detail::finish_result(res);
    return res;
  }
  if (!cfg.two_step) {
    const Matrix bread1 = g.a.transpose() * wa1.leftCols(d);
    const Matrix g1 = u * wa1.leftCols(d);
    const Matrix meat1 = g1.transpose() * g1;
    Eigen::ColPivHouseholderQR<Matrix> qr1(bread1);
    const Matrix binv_meat1 = qr1.solve(meat1);
    Matrix cov1 = qr1.solve(binv_meat1.transpose()).transpose();
    res.covariance = 0.5 * (cov1 + cov1.transpose());
    res.residuals = std::move(resid);
    detail::finish_result(res);
    return res;
  }

  require(cfg.reweighting_rounds >= 1, ErrorKind::BadParameter,
          "reweighting_rounds must be at least 1");
  Matrix wa;   // W2 * [A b]
  Matrix btw;  // A' W2 [A b]
  for (int round = 0; round < cfg.reweighting_rounds; ++round) {
  if (round > 0) {
    resid = detail::residual_matrix(tp, res.theta);
    u = detail::unit_scores(g, resid);
  }
  if (cfg.step2 == Step2Weighting::PerPeriodRobust) {
    wa.resize(g.m, d + 1);
    for (std::size_t k = 0; k < g.z.size(); ++k) {
      const int off = g.offset[k];
      const int mt = static_cast<int>(g.z[k].cols());
      const Matrix ze = g.z[k].array().colwise() * resid.col(static_cast<Eigen::Index>(k)).array();
      detail::WeightedSolve wb =
          detail::solve_weighting(ze.transpose() * ze, rhs.middleRows(off, mt));
      res.weighting_regularized = res.weighting_regularized || wb.regularized;
      wa.middleRows(off, mt) = wb.solution;
    }
    btw = g.a.transpose() * wa;
  } else if (g.m <= n) {
    detail::WeightedSolve w2 = detail::solve_weighting(u.transpose() * u, rhs);
    res.weighting_regularized = res.weighting_regularized || w2.regularized;
    wa = std::move(w2.solution);
    btw = g.a.transpose() * wa;
  } else {
    // rank(U'U) <= n < m, so invert through the score Gram factor:
    // W2 = pinv(U'U) = U' K^{-2} U with K = U U'
    Matrix k = u * u.transpose();
    const Matrix ur = u * rhs;  // n x (d+1)
    Matrix y, z;
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() == Eigen::Success) {
      y = llt.solve(ur);
      z = llt.solve(y);
    } else {
      const double ridge = 1e-10 * k.trace() / static_cast<double>(k.rows());
      require(std::isfinite(ridge) && ridge > 0.0, ErrorKind::SingularDesign,
              "score Gram matrix is singular and has no usable scale");
      k.diagonal().array() += ridge;
      Eigen::LDLT<Matrix> ldlt(k);
      require(ldlt.info() == Eigen::Success, ErrorKind::SingularDesign,
              "score Gram matrix remained singular after ridge");
      y = ldlt.solve(ur);
      z = ldlt.solve(y);
      res.weighting_regularized = true;
    }
    // A' W2 [A b] = (K^{-1} U A)' (K^{-1} U [A b])
    btw = y.leftCols(d).transpose() * y;
    wa = u.transpose() * z;
  }

  res.theta = detail::solve_small(btw.leftCols(d), btw.col(d));
  }

  // clustered sandwich at the step-2 estimate
  resid = detail::residual_matrix(tp, res.theta);
  Matrix u2 = detail::unit_scores(g, resid);
  const Matrix bread = btw.leftCols(d);  // A' W2 A
  const Matrix g2 = u2 * wa.leftCols(d); // n x d rows u2_i' W2 A
  const Matrix meat = g2.transpose() * g2;
  Eigen::ColPivHouseholderQR<Matrix> qr(bread);
  {
    const auto& r = qr.matrixR();
    const double r0 = std::fabs(r(0, 0));
    const double rd = std::fabs(r(d - 1, d - 1));
    require(rd > 0.0 && r0 / rd < 1e12, ErrorKind::SingularDesign,
            "step-2 bread matrix numerically singular");
  }
  const Matrix binv_meat = qr.solve(meat);
  Matrix cov = qr.solve(binv_meat.transpose()).transpose();
  res.covariance = 0.5 * (cov + cov.transpose());
  res.residuals = std::move(resid);
  detail::finish_result(res);
  return res;
}

inline EstimateResult ab_gmm_two_step(const PanelData& panel, const GmmConfig& cfg = {}) {
  return ab_gmm_two_step_on(panel, panel.all_units(), cfg);
}

/// Split-panel debiased AB: 2 theta(full) - (theta(half A) + theta(half B))/2
/// with halves drawn from a seeded permutation and demeaned within each half.
/// Standard errors are carried over from the full-sample run.
inline EstimateResult dab_ss(const PanelData& panel, std::uint64_t seed, const GmmConfig& cfg = {}) {
  require(panel.n_units() >= 4, ErrorKind::BadPlan, "dab_ss needs at least 4 units");
  EstimateResult full = ab_gmm_two_step(panel, cfg);

  Rng rng(seed);
  const auto halves = make_folds(panel.n_units(), 2, rng);
  const EstimateResult a = ab_gmm_two_step_on(panel, halves[0], cfg);
  const EstimateResult b = ab_gmm_two_step_on(panel, halves[1], cfg);

  EstimateResult res = std::move(full);
  res.method = Method::DABSS;
  res.seed = seed;
  res.theta = 2.0 * res.theta - 0.5 * (a.theta + b.theta);
  // covariance/std errors stay as the full-sample AB values
  const std::vector<int> all = panel.all_units();
  res.residuals = detail::residual_matrix(difference_and_demean(panel, all, true), res.theta);
  const double z = normal_quantile(0.5 * (1.0 + res.confidence));
  res.ci_lower = res.theta - z * res.std_errors;
  res.ci_upper = res.theta + z * res.std_errors;
  return res;
}

}  // namespace abpanel
