#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "abpanel/core.hpp"
#include "abpanel/lasso.hpp"
#include "abpanel/panel.hpp"

namespace abpanel {

enum class Method { ABLasso, ABLassoSS, ABGMM, DABSS, GeneralHighDim, Oracle };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::ABLasso: return "ab-lasso";
    case Method::ABLassoSS: return "ab-lasso-ss";
    case Method::ABGMM: return "ab-gmm";
    case Method::DABSS: return "dab-ss";
    case Method::GeneralHighDim: return "general";
    case Method::Oracle: return "oracle";
  }
  return "unknown";
}

enum class LagWeighting { Uniform, Distance };
enum class FirstStageKind { Lasso, Ols };

struct FirstStageConfig {
  double penalty_c = 1.0;
  double alpha_mass = 0.1;
  LagWeighting lag_weighting = LagWeighting::Uniform;
  bool post_lasso = true;
  FirstStageKind kind = FirstStageKind::Lasso;
  LassoOptions solver{};
};

enum class VarianceFits { FullSampleRefit, LastSplitFits };
enum class Aggregation { Median, Mean };

struct CrossFitPlan {
  int k_folds = 2;
  int n_splits = 1;
  std::uint64_t seed = 0;
  Aggregation aggregation = Aggregation::Median;
};

struct EstimatorConfig {
  FirstStageConfig first_stage{};
  double confidence = 0.95;
  VarianceFits variance_fits = VarianceFits::FullSampleRefit;
  // Add the cross-fit dispersion (between-fold spread of the per-fold
  // estimates, averaged over splits) to the plug-in covariance. The K-fold
  // estimator disperses beyond the full-sample plug-in in finite samples.
  bool split_dispersion_se = true;
};

struct LongRunEffect {
  std::string label;
  double estimate = 0.0;
  double std_error = 0.0;
};

struct PeriodSupport {
  int period = 0;
  int m_t = 0;
  double penalty = 0.0;
  std::vector<int> support_sizes;  // per projected regressor
};

struct EstimateResult {
  Method method = Method::ABLasso;
  std::vector<std::string> coefficient_names;
  Vector theta;
  Matrix covariance;  // finite-sample covariance of theta-hat
  Vector std_errors, ci_lower, ci_upper;
  Matrix residuals;   // N x (T-1), transformed-scale residuals
  double confidence = 0.95;
  int k_folds = 0;
  int n_splits = 0;
  std::uint64_t seed = 0;
  bool weighting_regularized = false;
  long moment_count = 0;
  std::vector<PeriodSupport> first_stage;
  std::vector<LongRunEffect> long_run;
};

/// Stacked first-stage coefficient matrices Theta_t, one row per projected
/// regressor, in the order given by `projected`.
struct FirstStageFits {
  std::vector<int> projected;
  std::vector<Matrix> theta;       // per period t = 2..T: d_proj x m_t
  std::vector<double> penalties;   // per period
  std::vector<std::vector<int>> support_sizes;
  std::vector<int> fit_subset;
};

namespace detail {

inline Vector penalty_weights(const InstrumentMatrix& vt, LagWeighting scheme) {
  Vector w = Vector::Ones(vt.m_t());
  w[0] = 0.0;
  if (scheme == LagWeighting::Distance) {
    for (int c = 1; c < vt.m_t(); ++c) {
      const int s = std::max(1, vt.columns[static_cast<std::size_t>(c)].time);
      w[c] = static_cast<double>(vt.period - 1) / static_cast<double>(s);
    }
  }
  return w;
}

inline std::vector<int> complement_of(const std::vector<int>& subset, int n) {
  std::vector<char> in(static_cast<std::size_t>(n), 0);
  for (int i : subset) in[static_cast<std::size_t>(i)] = 1;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n) - subset.size());
  for (int i = 0; i < n; ++i)
    if (!in[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

inline Matrix residual_matrix(const TransformedPanel& tp, const Vector& theta) {
  Matrix r = tp.diff_outcome;
  for (std::size_t j = 0; j < tp.diff_regressors.size(); ++j)
    r.noalias() -= tp.diff_regressors[j] * theta[static_cast<Eigen::Index>(j)];
  return r;
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

inline FirstStageFits fit_first_stage(const PanelData& panel, const std::vector<int>& fit_subset,
                                      const FirstStageConfig& cfg = {}) {
  require(fit_subset.size() >= 2, ErrorKind::IndexError, "first stage needs at least 2 units");
  const TransformedPanel tp = difference_and_demean(panel, fit_subset, true);
  const int t_periods = panel.n_periods();
  const int n = static_cast<int>(fit_subset.size());

  FirstStageFits fits;
  fits.fit_subset = fit_subset;
  for (int j = 0; j < panel.n_regressors(); ++j)
    if (panel.regressors()[static_cast<std::size_t>(j)].mode == InstrumentMode::Project)
      fits.projected.push_back(j);
  const int d_proj = static_cast<int>(fits.projected.size());

  for (int t = 2; t <= t_periods; ++t) {
    const InstrumentMatrix vt = build_instrument_matrix(panel, t, fit_subset);
    const double lambda = default_penalty(n, vt.m_t(), cfg.penalty_c, cfg.alpha_mass);
    const Vector weights = detail::penalty_weights(vt, cfg.lag_weighting);
    const Matrix gram = vt.values.transpose() * vt.values;

    Matrix theta_t(d_proj, vt.m_t());
    std::vector<int> sizes(static_cast<std::size_t>(d_proj), 0);
    for (int r = 0; r < d_proj; ++r) {
      const int j = fits.projected[static_cast<std::size_t>(r)];
      const Vector response = tp.diff_regressors[static_cast<std::size_t>(j)].col(t - 2);
      const Vector xty = vt.values.transpose() * response;
      try {
        LassoFit fit;
        if (cfg.kind == FirstStageKind::Ols) {
          std::vector<int> full(static_cast<std::size_t>(vt.m_t() - 1));
          for (int c = 1; c < vt.m_t(); ++c) full[static_cast<std::size_t>(c - 1)] = c;
          fit = post_lasso_refit(vt.values, response, full);
        } else {
          fit = solve_weighted_lasso_gram(gram, xty, response.squaredNorm(), n, lambda, weights,
                                          cfg.solver);
          if (cfg.post_lasso) fit = post_lasso_refit(vt.values, response, fit.support);
        }
        sizes[static_cast<std::size_t>(r)] = static_cast<int>(fit.support.size());
        theta_t.row(r) = fit.coefficients.transpose();
      } catch (const Error& e) {
        fail(e.kind(), "first stage at t=" + std::to_string(t) + ", regressor '" +
                           panel.regressors()[static_cast<std::size_t>(j)].name + "': " + e.what());
      }
    }
    fits.theta.push_back(std::move(theta_t));
    fits.penalties.push_back(lambda);
    fits.support_sizes.push_back(std::move(sizes));
  }
  return fits;
}

/// Per-regressor instrument series over `subset`: LASSO predictions
/// Theta_t V_it for projected regressors, own transformed values for
/// self-instrumenting ones. `tp_self` must be the transform of `subset`.
inline std::vector<Matrix> predict_instruments(const PanelData& panel, const FirstStageFits& fits,
                                               const std::vector<int>& subset,
                                               const TransformedPanel& tp_self) {
  const int t_periods = panel.n_periods();
  const int n = static_cast<int>(subset.size());
  std::vector<Matrix> preds(static_cast<std::size_t>(panel.n_regressors()));
  for (int j = 0; j < panel.n_regressors(); ++j)
    preds[static_cast<std::size_t>(j)].resize(n, t_periods - 1);

  for (int j = 0; j < panel.n_regressors(); ++j)
    if (panel.regressors()[static_cast<std::size_t>(j)].mode == InstrumentMode::Self)
      preds[static_cast<std::size_t>(j)] = tp_self.diff_regressors[static_cast<std::size_t>(j)];

  for (int t = 2; t <= t_periods; ++t) {
    const InstrumentMatrix vt = build_instrument_matrix(panel, t, subset);
    const Matrix& theta_t = fits.theta[static_cast<std::size_t>(t - 2)];
    require(theta_t.cols() == vt.m_t(), ErrorKind::ShapeError,
            "first-stage fit incompatible with panel at t=" + std::to_string(t));
    const Matrix fitted = vt.values * theta_t.transpose();  // n x d_proj
    for (int r = 0; r < static_cast<int>(fits.projected.size()); ++r)
      preds[static_cast<std::size_t>(fits.projected[static_cast<std::size_t>(r)])].col(t - 2) =
          fitted.col(r);
  }
  return preds;
}

/// theta-hat = (sum W-hat dX')^{-1} sum W-hat dY, solved by column-pivoted QR.
inline Vector iv_second_stage(const std::vector<Matrix>& predictions,
                              const std::vector<Matrix>& dx, const Matrix& dy) {
  const int d = static_cast<int>(dx.size());
  require(d >= 1, ErrorKind::ShapeError, "no regressors");
  require(predictions.size() == dx.size(), ErrorKind::ShapeError,
          "instrument/regressor count mismatch");
  for (int j = 0; j < d; ++j) {
    require(predictions[static_cast<std::size_t>(j)].rows() == dy.rows() &&
                predictions[static_cast<std::size_t>(j)].cols() == dy.cols() &&
                dx[static_cast<std::size_t>(j)].rows() == dy.rows() &&
                dx[static_cast<std::size_t>(j)].cols() == dy.cols(),
            ErrorKind::ShapeError, "instrument/regressor/outcome shapes disagree");
  }

  Matrix swx = Matrix::Zero(d, d);
  Vector swy = Vector::Zero(d);
  for (int a = 0; a < d; ++a) {
    const Matrix& pa = predictions[static_cast<std::size_t>(a)];
    swy[a] = pa.cwiseProduct(dy).sum();
    for (int b = 0; b < d; ++b)
      swx(a, b) = pa.cwiseProduct(dx[static_cast<std::size_t>(b)]).sum();
  }

  Eigen::ColPivHouseholderQR<Matrix> qr(swx);
  const auto& r = qr.matrixR();
  const double r0 = std::fabs(r(0, 0));
  const double rd = std::fabs(r(d - 1, d - 1));
  require(rd > 0.0 && r0 / rd < 1e12, ErrorKind::SingularDesign,
          "cross-moment matrix is numerically singular");
  return qr.solve(swy);
}

/// Empirical sandwich for the projected moment estimator: Q-hat and the score
/// covariance with the lag-one cross terms induced by differencing, all
/// accumulated in the d-dimensional instrument space. Returns the
/// finite-sample covariance Omega-hat / (NT).
inline Matrix sandwich_covariance(const std::vector<Matrix>& predictions,
                                  const std::vector<Matrix>& dx, const Matrix& residuals,
                                  int n_periods) {
  const int d = static_cast<int>(dx.size());
  const int n = static_cast<int>(residuals.rows());
  const int k = static_cast<int>(residuals.cols());
  require(k == n_periods - 1, ErrorKind::ShapeError, "residual columns != T-1");
  const double nt = static_cast<double>(n) * static_cast<double>(n_periods);

  Matrix q = Matrix::Zero(d, d);
  Matrix s0 = Matrix::Zero(d, d);
  Matrix s1 = Matrix::Zero(d, d);
  Matrix pt(n, d), xt(n, d), pe(n, d), pe_prev(n, d);
  for (int col = 0; col < k; ++col) {
    for (int j = 0; j < d; ++j) {
      pt.col(j) = predictions[static_cast<std::size_t>(j)].col(col);
      xt.col(j) = dx[static_cast<std::size_t>(j)].col(col);
    }
    q.noalias() += pt.transpose() * xt;
    pe = pt.array().colwise() * residuals.col(col).array();
    s0.noalias() += pe.transpose() * pe;
    if (col > 0) s1.noalias() += pe.transpose() * pe_prev;
    std::swap(pe, pe_prev);
  }
  q /= nt;
  Matrix sigma = (s0 + s1 + s1.transpose()) / nt;

  Eigen::ColPivHouseholderQR<Matrix> qr(q);
  const auto& r = qr.matrixR();
  const double r0 = std::fabs(r(0, 0));
  const double rd = std::fabs(r(d - 1, d - 1));
  require(rd > 0.0 && r0 / rd < 1e12, ErrorKind::SingularDesign, "Q-hat is numerically singular");
  const Matrix qinv_sigma = qr.solve(sigma);
  Matrix omega = qr.solve(qinv_sigma.transpose()).transpose();
  Matrix cov = omega / nt;
  return 0.5 * (cov + cov.transpose());
}

namespace detail {

inline void finish_result(EstimateResult& res) {
  const int d = static_cast<int>(res.theta.size());
  res.std_errors.resize(d);
  for (int j = 0; j < d; ++j) res.std_errors[j] = std::sqrt(std::max(0.0, res.covariance(j, j)));
  const double z = normal_quantile(0.5 * (1.0 + res.confidence));
  res.ci_lower = res.theta - z * res.std_errors;
  res.ci_upper = res.theta + z * res.std_errors;
}

inline std::vector<PeriodSupport> support_info(const FirstStageFits& fits) {
  std::vector<PeriodSupport> out;
  for (std::size_t k = 0; k < fits.theta.size(); ++k) {
    PeriodSupport ps;
    ps.period = static_cast<int>(k) + 2;
    ps.m_t = static_cast<int>(fits.theta[k].cols());
    ps.penalty = fits.penalties[k];
    ps.support_sizes = fits.support_sizes[k];
    out.push_back(std::move(ps));
  }
  return out;
}

/// Shared tail of the LASSO-family estimators: residuals at theta-hat on the
/// full sample, full-sample first-stage fits for the variance, sandwich, CIs.
inline void attach_variance(EstimateResult& res, const PanelData& panel,
                            const FirstStageFits& variance_fits, const EstimatorConfig& cfg) {
  const std::vector<int> all = panel.all_units();
  const TransformedPanel tp = difference_and_demean(panel, all, true);
  const std::vector<Matrix> preds = predict_instruments(panel, variance_fits, all, tp);
  res.residuals = residual_matrix(tp, res.theta);
  res.covariance = sandwich_covariance(preds, tp.diff_regressors, res.residuals, panel.n_periods());
  res.confidence = cfg.confidence;
  res.first_stage = support_info(variance_fits);
  finish_result(res);
}

}  // namespace detail

/// AB-LASSO: full-sample instrument selection followed by the linear IV step.
inline EstimateResult ab_lasso(const PanelData& panel, const EstimatorConfig& cfg = {}) {
  const std::vector<int> all = panel.all_units();
  const TransformedPanel tp = difference_and_demean(panel, all, true);
  const FirstStageFits fits = fit_first_stage(panel, all, cfg.first_stage);
  const std::vector<Matrix> preds = predict_instruments(panel, fits, all, tp);

  EstimateResult res;
  res.coefficient_names = panel.regressor_names();
  res.method = Method::ABLasso;
  res.theta = iv_second_stage(preds, tp.diff_regressors, tp.diff_outcome);
  detail::attach_variance(res, panel, fits, cfg);
  return res;
}

/// Cross-fitting over explicit folds: fold k is the main sample, its
/// complement the auxiliary sample; demeaning happens inside each side
/// separately; the K fold estimates are averaged.
inline Vector cross_fit_estimate(const PanelData& panel, const std::vector<std::vector<int>>& folds,
                                 const EstimatorConfig& cfg,
                                 FirstStageFits* last_aux_fits = nullptr,
                                 Matrix* fold_estimates_out = nullptr) {
  require(folds.size() >= 2, ErrorKind::BadPlan, "need at least 2 folds");
  const int d = panel.n_regressors();
  Matrix fold_estimates(d, static_cast<Eigen::Index>(folds.size()));
  for (std::size_t k = 0; k < folds.size(); ++k) {
    require(folds[k].size() >= 2, ErrorKind::BadPlan,
            "fold " + std::to_string(k) + " has fewer than 2 units");
    const std::vector<int> aux = detail::complement_of(folds[k], panel.n_units());
    require(aux.size() >= 2, ErrorKind::BadPlan, "fold complement has fewer than 2 units");
    const TransformedPanel tp_main = difference_and_demean(panel, folds[k], true);
    FirstStageFits fits = fit_first_stage(panel, aux, cfg.first_stage);
    const std::vector<Matrix> preds = predict_instruments(panel, fits, folds[k], tp_main);
    fold_estimates.col(static_cast<Eigen::Index>(k)) =
        iv_second_stage(preds, tp_main.diff_regressors, tp_main.diff_outcome);
    if (last_aux_fits && k + 1 == folds.size()) *last_aux_fits = std::move(fits);
  }
  if (fold_estimates_out) *fold_estimates_out = fold_estimates;
  return fold_estimates.rowwise().mean();
}

/// Contiguous folds of a seeded permutation; sizes differ by at most one with
/// the remainder assigned to the earliest folds.
inline std::vector<std::vector<int>> make_folds(int n_units, int k_folds, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n_units));
  for (int i = 0; i < n_units; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int i = n_units - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k_folds));
  const int base = n_units / k_folds;
  const int extra = n_units % k_folds;
  int pos = 0;
  for (int k = 0; k < k_folds; ++k) {
    const int size = base + (k < extra ? 1 : 0);
    folds[static_cast<std::size_t>(k)].assign(perm.begin() + pos, perm.begin() + pos + size);
    pos += size;
  }
  return folds;
}

inline void validate_plan(const CrossFitPlan& plan, int n_units) {
  require(plan.k_folds >= 2, ErrorKind::BadPlan, "k_folds must be at least 2");
  require(plan.n_splits >= 1, ErrorKind::BadPlan, "n_splits must be at least 1");
  require(plan.k_folds * 2 <= n_units, ErrorKind::BadPlan,
          "k_folds too large: each fold needs at least 2 units");
}

/// AB-LASSO-SS: K-fold cross-fitting over `n_splits` random unit
/// permutations, aggregated by median (default) or mean. Standard errors use
/// residuals at the aggregated estimate and, by default, a single full-sample
/// first-stage refit.
inline EstimateResult ab_lasso_ss(const PanelData& panel, const CrossFitPlan& plan,
                                  const EstimatorConfig& cfg = {}) {
  validate_plan(plan, panel.n_units());
  const int d = panel.n_regressors();
  Matrix split_estimates(d, plan.n_splits);
  Matrix fold_spread = Matrix::Zero(d, d);
  FirstStageFits last_fits;
  for (int r = 0; r < plan.n_splits; ++r) {
    Rng rng(derive_seed(plan.seed, static_cast<std::uint64_t>(r)));
    const auto folds = make_folds(panel.n_units(), plan.k_folds, rng);
    const bool want_fits =
        cfg.variance_fits == VarianceFits::LastSplitFits && r + 1 == plan.n_splits;
    Matrix fold_estimates;
    split_estimates.col(r) =
        cross_fit_estimate(panel, folds, cfg, want_fits ? &last_fits : nullptr, &fold_estimates);
    // between-fold spread of the split mean: folds cover disjoint units
    const int k_count = static_cast<int>(fold_estimates.cols());
    const Vector centre = fold_estimates.rowwise().mean();
    for (int k = 0; k < k_count; ++k) {
      const Vector dev = fold_estimates.col(k) - centre;
      fold_spread.noalias() += dev * dev.transpose() / (k_count * (k_count - 1.0));
    }
  }
  fold_spread /= plan.n_splits;

  EstimateResult res;
  res.coefficient_names = panel.regressor_names();
  res.method = Method::ABLassoSS;
  res.k_folds = plan.k_folds;
  res.n_splits = plan.n_splits;
  res.seed = plan.seed;
  res.theta.resize(panel.n_regressors());
  for (int j = 0; j < panel.n_regressors(); ++j) {
    if (plan.aggregation == Aggregation::Mean) {
      res.theta[j] = split_estimates.row(j).mean();
    } else {
      std::vector<double> v(static_cast<std::size_t>(plan.n_splits));
      for (int r = 0; r < plan.n_splits; ++r) v[static_cast<std::size_t>(r)] = split_estimates(j, r);
      res.theta[j] = detail::median_of(std::move(v));
    }
  }

  if (cfg.variance_fits == VarianceFits::FullSampleRefit)
    last_fits = fit_first_stage(panel, panel.all_units(), cfg.first_stage);
  detail::attach_variance(res, panel, last_fits, cfg);

  if (cfg.split_dispersion_se) {
    res.covariance += fold_spread;
    detail::finish_result(res);
  }
  return res;
}

/// Delta-method long-run effects theta_k / (1 - sum of lag coefficients).
inline std::vector<LongRunEffect> long_run_effects(const EstimateResult& result,
                                                   const std::vector<int>& effect_indices,
                                                   const std::vector<int>& lag_indices,
                                                   const std::vector<std::string>& labels = {}) {
  const int d = static_cast<int>(result.theta.size());
  for (int j : effect_indices)
    require(j >= 0 && j < d, ErrorKind::IndexError, "effect index out of range");
  for (int j : lag_indices)
    require(j >= 0 && j < d, ErrorKind::IndexError, "lag coefficient index out of range");
  double lag_sum = 0.0;
  for (int j : lag_indices) lag_sum += result.theta[j];
  const double denom = 1.0 - lag_sum;
  require(std::fabs(denom) >= 1e-8, ErrorKind::UnitRootError,
          "1 - sum of lag coefficients is numerically zero");

  std::vector<LongRunEffect> out;
  for (std::size_t e = 0; e < effect_indices.size(); ++e) {
    const int k = effect_indices[e];
    LongRunEffect lr;
    lr.label = e < labels.size() ? labels[e] : ("theta[" + std::to_string(k) + "]");
    lr.estimate = result.theta[k] / denom;
    Vector grad = Vector::Zero(d);
    grad[k] += 1.0 / denom;
    for (int j : lag_indices) grad[j] += result.theta[k] / (denom * denom);
    lr.std_error = std::sqrt(std::max(0.0, grad.dot(result.covariance * grad)));
    out.push_back(std::move(lr));
  }
  return out;
}

}  // namespace abpanel
