#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "abpanel/core.hpp"
#include "abpanel/panel.hpp"

namespace abpanel {

struct LpSolution {
  enum class Status { Optimal, Infeasible, Unbounded };
  Status status = Status::Optimal;
  Vector x;
  double objective = 0.0;
};

/// Two-phase tableau simplex with Bland's rule for
///   min c'x  subject to  A x <= b,  x >= 0,
/// sized for small dense problems. The terminal basis is re-solved against
/// the original data to strip accumulated pivot roundoff.
class SimplexSolver {
 public:
  SimplexSolver(Matrix a, Vector b, Vector c)
      : a_orig_(std::move(a)), b_orig_(std::move(b)), c_(std::move(c)) {
    m_ = static_cast<int>(a_orig_.rows());
    n_ = static_cast<int>(a_orig_.cols());
    require(b_orig_.size() == m_ && c_.size() == n_, ErrorKind::ShapeError,
            "LP dimensions disagree");
    double scale = 1.0;
    if (m_ > 0) scale = std::max({1.0, a_orig_.cwiseAbs().maxCoeff(), b_orig_.cwiseAbs().maxCoeff()});
    eps_ = 1e-9 * scale;
  }

  LpSolution solve() {
    LpSolution out;
    if (m_ == 0) {
      // only the sign constraints: minimum is at the origin (or unbounded)
      if ((c_.array() < 0.0).any()) {
        out.status = LpSolution::Status::Unbounded;
        return out;
      }
      out.x = Vector::Zero(n_);
      out.objective = 0.0;
      return out;
    }

    build_tableau();
    if (n_art_ > 0) {
      Vector phase1 = Vector::Zero(total_);
      phase1.segment(n_ + m_, n_art_).setOnes();
      if (!run(phase1, /*allow_artificials=*/true)) {
        out.status = LpSolution::Status::Unbounded;  // cannot happen in phase 1
        return out;
      }
      if (phase_objective(phase1) > 1e-7 * (1.0 + b_orig_.cwiseAbs().maxCoeff())) {
        out.status = LpSolution::Status::Infeasible;
        return out;
      }
      expel_artificials();
    }
    Vector phase2 = Vector::Zero(total_);
    phase2.head(n_) = c_;
    if (!run(phase2, /*allow_artificials=*/false)) {
      out.status = LpSolution::Status::Unbounded;
      return out;
    }
    out.x = refined_solution();
    out.objective = c_.dot(out.x);
    return out;
  }

 private:
  void build_tableau() {
    std::vector<int> art_rows;
    for (int i = 0; i < m_; ++i)
      if (b_orig_[i] < 0.0) art_rows.push_back(i);
    n_art_ = static_cast<int>(art_rows.size());
    total_ = n_ + m_ + n_art_;
    t_ = Matrix::Zero(m_, total_ + 1);
    basis_.assign(static_cast<std::size_t>(m_), -1);

    int art = 0;
    for (int i = 0; i < m_; ++i) {
      const double sign = b_orig_[i] < 0.0 ? -1.0 : 1.0;
      t_.row(i).head(n_) = sign * a_orig_.row(i);
      t_(i, n_ + i) = sign;  // slack
      t_(i, total_) = sign * b_orig_[i];
      if (sign < 0.0) {
        t_(i, n_ + m_ + art) = 1.0;
        basis_[static_cast<std::size_t>(i)] = n_ + m_ + art;
        ++art;
      } else {
        basis_[static_cast<std::size_t>(i)] = n_ + i;
      }
    }
  }

  void compute_reduced_costs(const Vector& cost, Vector& red, double& value) const {
    red = cost;
    value = 0.0;
    for (int i = 0; i < m_; ++i) {
      const double cb = cost[basis_[static_cast<std::size_t>(i)]];
      if (cb != 0.0) {
        red.noalias() -= cb * t_.row(i).head(total_).transpose();
        value += cb * t_(i, total_);
      }
    }
  }

  double phase_objective(const Vector& cost) const {
    double value = 0.0;
    for (int i = 0; i < m_; ++i) value += cost[basis_[static_cast<std::size_t>(i)]] * t_(i, total_);
    return value;
  }

  void pivot(int row, int col, Vector& red) {
    t_.row(row) /= t_(row, col);
    for (int i = 0; i < m_; ++i) {
      if (i == row) continue;
      const double f = t_(i, col);
      if (f != 0.0) t_.row(i).noalias() -= f * t_.row(row);
    }
    const double rc = red[col];
    if (rc != 0.0) red.noalias() -= rc * t_.row(row).head(total_).transpose();
    basis_[static_cast<std::size_t>(row)] = col;
  }

  // Bland's rule; returns false when unbounded.
  bool run(const Vector& cost, bool allow_artificials) {
    Vector red;
    double value = 0.0;
    compute_reduced_costs(cost, red, value);
    const int col_limit = allow_artificials ? total_ : n_ + m_;
    const long max_iter = 2000L + 200L * static_cast<long>(total_);
    for (long iter = 0; iter < max_iter; ++iter) {
      int entering = -1;
      for (int j = 0; j < col_limit; ++j) {
        if (red[j] < -eps_) {
          entering = j;
          break;
        }
      }
      if (entering < 0) return true;  // optimal
      int leaving = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i) {
        const double aij = t_(i, entering);
        if (aij > eps_) {
          const double ratio = t_(i, total_) / aij;
          if (ratio < best_ratio - 1e-15 ||
              (std::fabs(ratio - best_ratio) <= 1e-15 &&
               (leaving < 0 || basis_[static_cast<std::size_t>(i)] <
                                   basis_[static_cast<std::size_t>(leaving)]))) {
            best_ratio = ratio;
            leaving = i;
          }
        }
      }
      if (leaving < 0) return false;  // unbounded
      pivot(leaving, entering, red);
    }
    fail(ErrorKind::Internal, "simplex exceeded its iteration budget");
  }

  void expel_artificials() {
    for (int i = 0; i < m_; ++i) {
      if (basis_[static_cast<std::size_t>(i)] < n_ + m_) continue;
      int col = -1;
      for (int j = 0; j < n_ + m_; ++j) {
        if (std::fabs(t_(i, j)) > eps_) {
          col = j;
          break;
        }
      }
      if (col >= 0) {
        Vector dummy = Vector::Zero(total_);
        pivot(i, col, dummy);
      }
      // a fully zero row is a redundant constraint; its artificial stays
      // basic at level zero and is excluded from phase 2
    }
  }

  Vector refined_solution() const {
    std::vector<int> rows, cols;
    for (int i = 0; i < m_; ++i) {
      const int j = basis_[static_cast<std::size_t>(i)];
      if (j < n_ + m_) {
        rows.push_back(i);
        cols.push_back(j);
      }
    }
    Matrix basis_mat(m_, static_cast<int>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const int j = cols[k];
      if (j < n_)
        basis_mat.col(static_cast<Eigen::Index>(k)) = a_orig_.col(j);
      else {
        basis_mat.col(static_cast<Eigen::Index>(k)).setZero();
        basis_mat(j - n_, static_cast<Eigen::Index>(k)) = 1.0;
      }
    }
    Vector xb = basis_mat.completeOrthogonalDecomposition().solve(b_orig_);
    Vector x = Vector::Zero(n_);
    for (std::size_t k = 0; k < cols.size(); ++k)
      if (cols[k] < n_) x[cols[k]] = std::max(0.0, xb[static_cast<Eigen::Index>(k)]);
    return x;
  }

  Matrix a_orig_;
  Vector b_orig_;
  Vector c_;
  Matrix t_;
  std::vector<int> basis_;
  int m_ = 0, n_ = 0, n_art_ = 0, total_ = 0;
  double eps_ = 1e-9;
};

inline LpSolution solve_lp_min(const Matrix& a, const Vector& b, const Vector& c) {
  return SimplexSolver(a, b, c).solve();
}

}  // namespace abpanel
