#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "abpanel/core.hpp"
#include "abpanel/panel.hpp"

namespace abpanel {

struct LassoOptions {
  double tol = 1e-8;      // relative coefficient-change threshold per sweep
  int max_sweeps = 10000;
};

struct LassoFit {
  Vector coefficients;        // intercept first
  std::vector<int> support;   // indices of nonzero slope coefficients
  double penalty = 0.0;
  Vector weights;             // per-column penalty weight, weights[0] == 0
  bool post_refit = false;
  double objective_value = 0.0;
  int sweeps = 0;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& msg, LassoFit iterate)
      : Error(ErrorKind::ConvergenceError, msg), last_iterate(std::move(iterate)) {}
  LassoFit last_iterate;
};

/// Cross-section penalty rule lambda_t = 2 c sqrt(n) Phi^{-1}(1 - alpha/(2 m_t)).
inline double default_penalty(int n_obs, int m_t, double c = 1.0, double alpha_mass = 0.1) {
  require(n_obs >= 1, ErrorKind::BadParameter, "default_penalty: n_obs must be positive");
  require(m_t >= 1, ErrorKind::BadParameter, "default_penalty: m_t must be positive");
  require(c >= 0.0, ErrorKind::BadParameter, "default_penalty: c must be nonnegative");
  require(alpha_mass > 0.0 && alpha_mass < 1.0, ErrorKind::BadParameter,
          "default_penalty: alpha_mass outside (0,1)");
  const double q = alpha_mass / (2.0 * m_t);
  require(q < 1.0, ErrorKind::BadParameter, "default_penalty: alpha_mass/(2 m_t) >= 1");
  // Phi^{-1}(1 - q) computed through the lower tail to avoid cancellation
  return 2.0 * c * std::sqrt(static_cast<double>(n_obs)) * (-normal_quantile(q));
}

namespace detail {

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

inline void check_lasso_inputs(Eigen::Index m, const Vector& weights, double penalty) {
  require(m >= 1, ErrorKind::ShapeError, "design has no columns");
  require(weights.size() == m, ErrorKind::ShapeError, "one penalty weight per column required");
  require(penalty >= 0.0, ErrorKind::BadParameter, "negative penalty");
  require(weights.minCoeff() >= 0.0, ErrorKind::BadParameter, "negative penalty weight");
  require(weights[0] == 0.0, ErrorKind::BadParameter, "intercept weight must be 0");
}

inline double lasso_objective_gram(const Matrix& gram, const Vector& xty, double yty,
                                   const Vector& coef, double penalty, const Vector& weights) {
  const double ssr = yty - 2.0 * coef.dot(xty) + coef.dot(gram * coef);
  double l1 = 0.0;
  for (Eigen::Index j = 0; j < coef.size(); ++j) l1 += weights[j] * std::fabs(coef[j]);
  return ssr + penalty * l1;
}

}  // namespace detail

/// Weighted LASSO on precomputed cross moments: minimizes
///   y'y - 2 pi' X'y + pi' X'X pi + penalty * sum_j w_j |pi_j|
/// by cyclic coordinate descent with exact soft-threshold updates. The first
/// column is the unpenalized intercept. Deterministic for fixed inputs.
inline LassoFit solve_weighted_lasso_gram(const Matrix& gram, const Vector& xty, double yty,
                                          Eigen::Index n_obs, double penalty,
                                          const Vector& weights, const LassoOptions& opts = {}) {
  const Eigen::Index m = gram.rows();
  require(gram.cols() == m && xty.size() == m, ErrorKind::ShapeError,
          "gram/xty dimensions disagree");
  detail::check_lasso_inputs(m, weights, penalty);
  require(n_obs >= 1, ErrorKind::ShapeError, "empty design");

  Vector coef = Vector::Zero(m);
  Vector grad = xty;  // X'(y - X pi)
  const double y_scale = std::sqrt(std::max(yty, 0.0) / static_cast<double>(n_obs));
  const double step_tol = opts.tol * (1.0 + y_scale);

  std::vector<int> active;
  active.reserve(static_cast<std::size_t>(m));

  auto update_coord = [&](Eigen::Index j) -> double {
    const double gjj = gram(j, j);
    if (gjj <= 0.0) return 0.0;
    const double rho = grad[j] + gjj * coef[j];
    const double updated =
        (j == 0) ? rho / gjj : detail::soft_threshold(rho, 0.5 * penalty * weights[j]) / gjj;
    const double delta = updated - coef[j];
    if (delta != 0.0) {
      coef[j] = updated;
      grad.noalias() -= gram.col(j) * delta;
    }
    return std::fabs(delta) * std::sqrt(gjj / static_cast<double>(n_obs));
  };

  int sweeps = 0;
  bool converged = false;
  while (sweeps < opts.max_sweeps) {
    // full pass
    double max_step = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) max_step = std::max(max_step, update_coord(j));
    ++sweeps;
    if (max_step < step_tol) {
      converged = true;
      break;
    }
    // inner passes on the current active set
    active.clear();
    for (Eigen::Index j = 0; j < m; ++j)
      if (j == 0 || coef[j] != 0.0) active.push_back(static_cast<int>(j));
    while (sweeps < opts.max_sweeps) {
      double inner_step = 0.0;
      for (int j : active) inner_step = std::max(inner_step, update_coord(j));
      ++sweeps;
      if (inner_step < step_tol) break;
    }
  }

  LassoFit fit;
  fit.coefficients = coef;
  fit.penalty = penalty;
  fit.weights = weights;
  fit.sweeps = sweeps;
  for (Eigen::Index j = 1; j < m; ++j)
    if (coef[j] != 0.0) fit.support.push_back(static_cast<int>(j));
  fit.objective_value = detail::lasso_objective_gram(gram, xty, yty, coef, penalty, weights);
  if (!converged) {
    // one more look: the active-set loop may have finished the job exactly
    double max_step = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) max_step = std::max(max_step, update_coord(j));
    if (max_step >= step_tol)
      throw ConvergenceError("coordinate descent did not converge in " +
                                 std::to_string(opts.max_sweeps) + " sweeps",
                             fit);
  }
  return fit;
}

inline LassoFit solve_weighted_lasso(const Matrix& design, const Vector& response, double penalty,
                                     const Vector& weights, const LassoOptions& opts = {}) {
  require(design.rows() == response.size(), ErrorKind::ShapeError,
          "design rows != response length");
  require(design.rows() >= 1, ErrorKind::ShapeError, "empty design");
  const Matrix gram = design.transpose() * design;
  const Vector xty = design.transpose() * response;
  return solve_weighted_lasso_gram(gram, xty, response.squaredNorm(), design.rows(), penalty,
                                   weights, opts);
}

/// OLS refit on the intercept plus the given support columns. Rank-deficient
/// restricted designs fall back to the minimum-norm least-squares solution.
inline LassoFit post_lasso_refit(const Matrix& design, const Vector& response,
                                 const std::vector<int>& support) {
  require(design.rows() >= 1 && design.cols() >= 1, ErrorKind::ShapeError, "empty design");
  require(design.rows() == response.size(), ErrorKind::ShapeError,
          "design rows != response length");
  std::vector<int> cols = support;
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  for (int j : cols)
    require(j >= 1 && j < design.cols(), ErrorKind::IndexError,
            "support index " + std::to_string(j) + " is not a slope column");

  Matrix restricted(design.rows(), 1 + static_cast<Eigen::Index>(cols.size()));
  restricted.col(0) = design.col(0);
  for (std::size_t k = 0; k < cols.size(); ++k)
    restricted.col(1 + static_cast<Eigen::Index>(k)) = design.col(cols[k]);

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(restricted);
  Vector beta = cod.solve(response);

  LassoFit fit;
  fit.coefficients = Vector::Zero(design.cols());
  fit.coefficients[0] = beta[0];
  for (std::size_t k = 0; k < cols.size(); ++k)
    fit.coefficients[cols[k]] = beta[1 + static_cast<Eigen::Index>(k)];
  for (int j : cols)
    if (fit.coefficients[j] != 0.0) fit.support.push_back(j);
  fit.post_refit = true;
  fit.weights = Vector::Zero(design.cols());
  fit.objective_value = (response - restricted * beta).squaredNorm();
  return fit;
}

inline Vector predict(const LassoFit& fit, const Matrix& design) {
  require(design.cols() == fit.coefficients.size(), ErrorKind::ShapeError,
          "design column count != coefficient length");
  return design * fit.coefficients;
}

/// Largest violation of the subgradient optimality conditions, measured on
/// the averaged gradient g_j = N^{-1} sum_i v_ij r_i against the threshold
/// penalty * w_j / (2N). Zero at an exact solution.
inline double kkt_gap_gram(const Matrix& gram, const Vector& xty, Eigen::Index n_obs,
                           const LassoFit& fit) {
  const Vector grad = (xty - gram * fit.coefficients) / static_cast<double>(n_obs);
  double worst = std::fabs(grad[0]);  // unpenalized intercept: gradient must vanish
  for (Eigen::Index j = 1; j < grad.size(); ++j) {
    const double threshold = 0.5 * fit.penalty * fit.weights[j] / static_cast<double>(n_obs);
    if (fit.coefficients[j] != 0.0)
      worst = std::max(worst, std::fabs(grad[j] - threshold * (fit.coefficients[j] > 0 ? 1.0 : -1.0)));
    else
      worst = std::max(worst, std::max(0.0, std::fabs(grad[j]) - threshold));
  }
  return worst;
}

inline double kkt_gap(const Matrix& design, const Vector& response, const LassoFit& fit) {
  return kkt_gap_gram(design.transpose() * design, design.transpose() * response, design.rows(),
                      fit);
}

}  // namespace abpanel
