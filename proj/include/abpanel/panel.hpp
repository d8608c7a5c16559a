#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "abpanel/core.hpp"

namespace abpanel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class InstrumentMode { Project, Self };

/// One regressor series. A column is either a plain series carrying its own
/// values, or a lag of the outcome (outcome_lag > 0), in which case the
/// values are derived from the outcome and its pre-sample history.
struct RegressorColumn {
  std::string name;
  Matrix values;  // N x T; filled by PanelData for outcome-lag columns
  InstrumentMode mode = InstrumentMode::Project;
  int outcome_lag = 0;
  bool future_lags = false;  // strictly exogenous: periods s = t..T also instrument
};

/// Balanced panel with unit/time effects handled by transform, not storage.
/// Outcome levels are addressed by a history index m: m in 1..T is the panel
/// outcome itself, m in (1-p)..0 addresses the p pre-sample columns kept for
/// instrument construction. Levels before `outcome_first_observed` exist as
/// regressor values but are never offered as instruments.
class PanelData {
 public:
  PanelData(Matrix outcome, std::vector<RegressorColumn> regressors,
            Matrix outcome_history = Matrix(), int outcome_first_observed = 1)
      : outcome_(std::move(outcome)),
        history_(std::move(outcome_history)),
        regressors_(std::move(regressors)),
        first_observed_(outcome_first_observed) {
    n_ = static_cast<int>(outcome_.rows());
    t_ = static_cast<int>(outcome_.cols());
    require(n_ >= 2, ErrorKind::BadParameter, "panel needs at least 2 units");
    require(t_ >= 3, ErrorKind::BadParameter, "panel needs at least 3 periods");
    require(outcome_.allFinite(), ErrorKind::BadValue, "outcome contains a non-finite value");
    if (history_.size() > 0) {
      require(history_.rows() == n_, ErrorKind::ShapeError, "outcome history row count != N");
      require(history_.allFinite(), ErrorKind::BadValue, "outcome history contains a non-finite value");
    }
    const int p = history_width();
    require(first_observed_ >= 1 - p, ErrorKind::BadParameter,
            "outcome_first_observed precedes available history");

    std::set<std::string> names;
    for (auto& col : regressors_) {
      require(names.insert(col.name).second, ErrorKind::BadParameter,
              "duplicate regressor name '" + col.name + "'");
      if (col.outcome_lag > 0) {
        require(col.outcome_lag <= p, ErrorKind::BadParameter,
                "outcome lag " + std::to_string(col.outcome_lag) +
                    " exceeds available history (" + std::to_string(p) + ")");
        col.values.resize(n_, t_);
        for (int t = 1; t <= t_; ++t) col.values.col(t - 1) = outcome_level(t - col.outcome_lag);
      } else {
        require(col.values.rows() == n_ && col.values.cols() == t_, ErrorKind::ShapeError,
                "regressor '" + col.name + "' is not N x T");
        require(col.values.allFinite(), ErrorKind::BadValue,
                "regressor '" + col.name + "' contains a non-finite value");
      }
    }
  }

  int n_units() const { return n_; }
  int n_periods() const { return t_; }
  int n_regressors() const { return static_cast<int>(regressors_.size()); }
  int history_width() const { return history_.size() > 0 ? static_cast<int>(history_.cols()) : 0; }
  int outcome_first_observed() const { return first_observed_; }

  const Matrix& outcome() const { return outcome_; }
  const std::vector<RegressorColumn>& regressors() const { return regressors_; }

  std::vector<std::string> regressor_names() const {
    std::vector<std::string> out;
    out.reserve(regressors_.size());
    for (const auto& c : regressors_) out.push_back(c.name);
    return out;
  }

  /// Outcome level column by history index m in (1 - p)..T.
  Vector outcome_level(int m) const {
    if (m >= 1) {
      require(m <= t_, ErrorKind::IndexError, "outcome level index beyond T");
      return outcome_.col(m - 1);
    }
    const int p = history_width();
    require(m >= 1 - p, ErrorKind::IndexError, "outcome level index precedes history");
    return history_.col(m - (1 - p));
  }

  std::vector<int> all_units() const {
    std::vector<int> idx(n_);
    for (int i = 0; i < n_; ++i) idx[i] = i;
    return idx;
  }

 private:
  Matrix outcome_;
  Matrix history_;
  std::vector<RegressorColumn> regressors_;
  int first_observed_;
  int n_ = 0;
  int t_ = 0;
};

/// First differences of outcome and regressors over a unit subset, optionally
/// demeaned cross-sectionally within the subset. Column k holds the
/// difference at period t = k + 2.
struct TransformedPanel {
  std::vector<int> unit_index;
  Matrix diff_outcome;              // |subset| x (T-1)
  std::vector<Matrix> diff_regressors;  // per regressor, |subset| x (T-1)
  bool demeaned = false;
};

namespace detail {

inline void check_subset(const std::vector<int>& subset, int n) {
  require(!subset.empty(), ErrorKind::IndexError, "empty unit subset");
  std::set<int> seen;
  for (int i : subset) {
    require(i >= 0 && i < n, ErrorKind::IndexError,
            "unit index " + std::to_string(i) + " out of range");
    require(seen.insert(i).second, ErrorKind::IndexError,
            "unit index " + std::to_string(i) + " repeated in subset");
  }
}

inline Matrix diff_rows(const Matrix& x, const std::vector<int>& subset) {
  const int t = static_cast<int>(x.cols());
  Matrix d(static_cast<int>(subset.size()), t - 1);
  for (int r = 0; r < static_cast<int>(subset.size()); ++r)
    d.row(r) = x.row(subset[r]).tail(t - 1) - x.row(subset[r]).head(t - 1);
  return d;
}

}  // namespace detail

inline TransformedPanel difference_and_demean(const PanelData& panel,
                                              const std::vector<int>& unit_subset,
                                              bool demean) {
  detail::check_subset(unit_subset, panel.n_units());
  require(unit_subset.size() >= 2, ErrorKind::IndexError,
          "difference_and_demean needs at least 2 units");
  TransformedPanel tp;
  tp.unit_index = unit_subset;
  tp.demeaned = demean;
  tp.diff_outcome = detail::diff_rows(panel.outcome(), unit_subset);
  if (demean) tp.diff_outcome.rowwise() -= tp.diff_outcome.colwise().mean();
  tp.diff_regressors.reserve(panel.n_regressors());
  for (const auto& col : panel.regressors()) {
    Matrix d = detail::diff_rows(col.values, unit_subset);
    if (demean) d.rowwise() -= d.colwise().mean();
    tp.diff_regressors.push_back(std::move(d));
  }
  return tp;
}

/// Instrument column identity: the constant, the level of regressor j at
/// panel period `time`, or an outcome level addressed by history index `time`.
struct InstrumentColumn {
  enum class Kind { Constant, RegressorLevel, OutcomeLevel };
  Kind kind = Kind::Constant;
  int regressor = -1;
  int time = 0;
  std::string label;
};

/// Period-t instrument set V_it = (1, admissible lagged levels). Outcome
/// levels are emitted once even when several outcome-lag regressors could
/// supply them.
struct InstrumentMatrix {
  int period = 0;
  std::vector<InstrumentColumn> columns;
  Matrix values;  // |subset| x m_t
  int m_t() const { return static_cast<int>(columns.size()); }
};

inline InstrumentMatrix build_instrument_matrix(const PanelData& panel, int t,
                                                const std::vector<int>& unit_subset) {
  require(t >= 2 && t <= panel.n_periods(), ErrorKind::IndexError,
          "instrument period t=" + std::to_string(t) + " outside 2..T");
  detail::check_subset(unit_subset, panel.n_units());

  std::vector<InstrumentColumn> cols;
  cols.push_back({InstrumentColumn::Kind::Constant, -1, 0, "const"});
  std::set<int> outcome_levels_used;
  const int lowest_level = 1 - panel.history_width();

  for (int j = 0; j < panel.n_regressors(); ++j) {
    const auto& reg = panel.regressors()[static_cast<std::size_t>(j)];
    if (reg.outcome_lag > 0) {
      // column value at period s is the outcome level s - lag
      for (int s = t - 1; s >= 1; --s) {
        const int m = s - reg.outcome_lag;
        if (m < panel.outcome_first_observed() || m < lowest_level) break;
        if (!outcome_levels_used.insert(m).second) continue;
        cols.push_back({InstrumentColumn::Kind::OutcomeLevel, j, m,
                        "y[" + std::to_string(m) + "]"});
      }
    } else {
      for (int s = t - 1; s >= 1; --s)
        cols.push_back({InstrumentColumn::Kind::RegressorLevel, j, s,
                        reg.name + "[" + std::to_string(s) + "]"});
      if (reg.future_lags)
        for (int s = t; s <= panel.n_periods(); ++s)
          cols.push_back({InstrumentColumn::Kind::RegressorLevel, j, s,
                          reg.name + "[" + std::to_string(s) + "]"});
    }
  }

  InstrumentMatrix vt;
  vt.period = t;
  vt.values.resize(static_cast<int>(unit_subset.size()), static_cast<int>(cols.size()));
  for (int c = 0; c < static_cast<int>(cols.size()); ++c) {
    const auto& col = cols[static_cast<std::size_t>(c)];
    switch (col.kind) {
      case InstrumentColumn::Kind::Constant:
        vt.values.col(c).setOnes();
        break;
      case InstrumentColumn::Kind::RegressorLevel: {
        const auto& series = panel.regressors()[static_cast<std::size_t>(col.regressor)].values;
        for (int r = 0; r < static_cast<int>(unit_subset.size()); ++r)
          vt.values(r, c) = series(unit_subset[static_cast<std::size_t>(r)], col.time - 1);
        break;
      }
      case InstrumentColumn::Kind::OutcomeLevel: {
        Vector level = panel.outcome_level(col.time);
        for (int r = 0; r < static_cast<int>(unit_subset.size()); ++r)
          vt.values(r, c) = level(unit_subset[static_cast<std::size_t>(r)]);
        break;
      }
    }
  }
  vt.columns = std::move(cols);
  return vt;
}

/// Builds a panel from long-format rows. Unit ids are re-indexed in sorted
/// order (numeric when every id parses as an integer) so the result does not
/// depend on row order; time ids must form one contiguous range shared by all
/// units.
struct PanelRow {
  std::string unit;
  long long time = 0;
  double outcome = 0.0;
  std::vector<double> regressors;
};

inline PanelData load_panel(const std::vector<PanelRow>& rows,
                            const std::vector<std::string>& regressor_names,
                            std::vector<InstrumentMode> modes = {}) {
  require(!rows.empty(), ErrorKind::UnbalancedPanel, "no data rows");
  const std::size_t d = regressor_names.size();
  if (modes.empty()) modes.assign(d, InstrumentMode::Project);
  require(modes.size() == d, ErrorKind::BadParameter, "one instrument mode per regressor required");

  bool numeric_ids = true;
  std::vector<long long> numeric_values(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    try {
      std::size_t pos = 0;
      numeric_values[r] = std::stoll(rows[r].unit, &pos);
      if (pos != rows[r].unit.size()) numeric_ids = false;
    } catch (const std::exception&) {
      numeric_ids = false;
    }
    if (!numeric_ids) break;
  }

  std::map<std::string, int> unit_of;  // sorted by id
  if (numeric_ids) {
    std::map<long long, std::string> by_value;
    for (std::size_t r = 0; r < rows.size(); ++r) by_value[numeric_values[r]] = rows[r].unit;
    int next = 0;
    for (auto& [value, name] : by_value) unit_of[name] = next++;
  } else {
    std::set<std::string> ids;
    for (const auto& row : rows) ids.insert(row.unit);
    int next = 0;
    for (const auto& id : ids) unit_of[id] = next++;
  }

  long long t_min = rows.front().time, t_max = rows.front().time;
  for (const auto& row : rows) {
    t_min = std::min(t_min, row.time);
    t_max = std::max(t_max, row.time);
  }
  const long long t_span = t_max - t_min + 1;
  const int n = static_cast<int>(unit_of.size());
  require(t_span >= 3, ErrorKind::BadParameter, "panel needs at least 3 periods");
  require(n >= 2, ErrorKind::BadParameter, "panel needs at least 2 units");
  const int t = static_cast<int>(t_span);

  Matrix outcome(n, t);
  std::vector<RegressorColumn> cols(d);
  for (std::size_t j = 0; j < d; ++j) {
    cols[j].name = regressor_names[j];
    cols[j].mode = modes[j];
    cols[j].values.resize(n, t);
  }
  std::vector<char> filled(static_cast<std::size_t>(n) * static_cast<std::size_t>(t), 0);

  for (const auto& row : rows) {
    require(row.regressors.size() == d, ErrorKind::UnbalancedPanel,
            "row for unit '" + row.unit + "' has wrong number of regressor values");
    const int i = unit_of.at(row.unit);
    const int k = static_cast<int>(row.time - t_min);
    auto& cell = filled[static_cast<std::size_t>(i) * static_cast<std::size_t>(t) +
                        static_cast<std::size_t>(k)];
    require(!cell, ErrorKind::DuplicateCell,
            "duplicate cell (unit=" + row.unit + ", time=" + std::to_string(row.time) + ")");
    cell = 1;
    require(std::isfinite(row.outcome), ErrorKind::BadValue,
            "non-finite outcome at (unit=" + row.unit + ", time=" + std::to_string(row.time) + ")");
    outcome(i, k) = row.outcome;
    for (std::size_t j = 0; j < d; ++j) {
      require(std::isfinite(row.regressors[j]), ErrorKind::BadValue,
              "non-finite value in '" + regressor_names[j] + "' at (unit=" + row.unit +
                  ", time=" + std::to_string(row.time) + ")");
      cols[j].values(i, k) = row.regressors[j];
    }
  }
  // with duplicates ruled out above, a full grid is exactly n*t cells
  require(static_cast<long long>(rows.size()) == static_cast<long long>(t) * n,
          ErrorKind::UnbalancedPanel,
          "expected " + std::to_string(static_cast<long long>(t) * n) +
              " cells for a balanced panel, got " + std::to_string(rows.size()));
  return PanelData(std::move(outcome), std::move(cols));
}

/// Rebuilds a panel around a dynamic model: trims the first `n_lags` periods
/// into outcome history and prepends outcome-lag regressor columns, so lag
/// values are always tool-built and pre-window outcome levels stay available
/// as instruments.
inline PanelData build_lagged_model(const PanelData& raw, int n_lags,
                                    const std::string& outcome_name = "y") {
  require(n_lags >= 0, ErrorKind::BadParameter, "negative lag count");
  if (n_lags == 0) return raw;
  require(raw.n_periods() - n_lags >= 3, ErrorKind::BadParameter,
          "panel too short for " + std::to_string(n_lags) + " outcome lags");
  const int n = raw.n_units();
  const int t = raw.n_periods() - n_lags;

  Matrix history = raw.outcome().leftCols(n_lags);
  Matrix outcome = raw.outcome().rightCols(t);
  std::vector<RegressorColumn> cols;
  for (int l = 1; l <= n_lags; ++l) {
    RegressorColumn c;
    c.name = outcome_name + "_l" + std::to_string(l);
    c.mode = InstrumentMode::Project;
    c.outcome_lag = l;
    cols.push_back(std::move(c));
  }
  for (const auto& src : raw.regressors()) {
    RegressorColumn c = src;
    c.values = src.values.rightCols(t).eval();
    cols.push_back(std::move(c));
  }
  (void)n;
  return PanelData(std::move(outcome), std::move(cols), std::move(history),
                   1 - n_lags);
}

}  // namespace abpanel
