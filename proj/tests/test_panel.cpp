#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "abpanel/panel.hpp"
#include "oracle_helpers.hpp"

using namespace abpanel;

namespace {

std::vector<PanelRow> square_rows(int n, int t, double base = 0.0) {
  std::vector<PanelRow> rows;
  for (int i = 1; i <= n; ++i)
    for (int k = 1; k <= t; ++k) {
      PanelRow r;
      r.unit = std::to_string(i);
      r.time = k;
      r.outcome = base + 10.0 * i + k;
      r.regressors = {i * 0.5 + k * k};
      rows.push_back(r);
    }
  return rows;
}

}  // namespace

TEST_CASE("load_panel builds a minimal balanced panel") {
  auto panel = load_panel(square_rows(2, 3), {"d"});
  CHECK(panel.n_units() == 2);
  CHECK(panel.n_periods() == 3);
  CHECK(panel.outcome()(0, 0) == 11.0);
  CHECK(panel.regressors()[0].values(1, 2) == 1.0 + 9.0);
}

TEST_CASE("load_panel rejects a panel with a missing cell") {
  auto rows = square_rows(2, 3);
  rows.pop_back();
  CHECK_THROWS_MATCHES(load_panel(rows, {"d"}), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.kind() == ErrorKind::UnbalancedPanel;
                       }));
}

TEST_CASE("load_panel rejects duplicates and non-finite values") {
  auto rows = square_rows(2, 3);
  rows.push_back(rows.front());
  CHECK_THROWS_MATCHES(load_panel(rows, {"d"}), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.kind() == ErrorKind::DuplicateCell;
                       }));
  rows = square_rows(2, 3);
  rows[2].outcome = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_MATCHES(load_panel(rows, {"d"}), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.kind() == ErrorKind::BadValue; }));
}

TEST_CASE("load_panel is invariant to row order") {
  auto rows = square_rows(4, 5);
  auto shuffled = rows;
  std::mt19937 gen(7);
  std::shuffle(shuffled.begin(), shuffled.end(), gen);
  auto a = load_panel(rows, {"d"});
  auto b = load_panel(shuffled, {"d"});
  REQUIRE(a.n_units() == b.n_units());
  REQUIRE(a.n_periods() == b.n_periods());
  CHECK(a.outcome() == b.outcome());
  CHECK(a.regressors()[0].values == b.regressors()[0].values);
}

TEST_CASE("differencing kills constants and unit effects; demeaning kills time effects") {
  const int n = 5, t = 6;
  Matrix constant = Matrix::Constant(n, t, 7.0);
  Matrix unit_effects(n, t), time_effects(n, t);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < t; ++k) {
      unit_effects(i, k) = 3.0 * i - 1.0;
      time_effects(i, k) = 0.5 * k * k;
    }
  std::vector<RegressorColumn> cols(1);
  cols[0].name = "d";
  cols[0].values = Matrix::Random(n, t);

  auto all = PanelData(constant, cols).all_units();
  CHECK(difference_and_demean(PanelData(constant, cols), all, false)
            .diff_outcome.cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(difference_and_demean(PanelData(unit_effects, cols), all, false)
            .diff_outcome.cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(difference_and_demean(PanelData(time_effects, cols), all, true)
            .diff_outcome.cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("demeaned differences have zero cross-sectional mean per period") {
  Rng rng(3);
  const int n = 7, t = 5;
  Matrix y(n, t);
  std::vector<RegressorColumn> cols(1);
  cols[0].name = "d";
  cols[0].values.resize(n, t);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < t; ++k) {
      y(i, k) = rng.normal();
      cols[0].values(i, k) = rng.normal();
    }
  PanelData panel(y, cols);
  std::vector<int> subset = {0, 2, 3, 6};
  auto tp = difference_and_demean(panel, subset, true);
  for (int k = 0; k < t - 1; ++k) {
    CHECK(std::fabs(tp.diff_outcome.col(k).mean()) < 1e-12);
    CHECK(std::fabs(tp.diff_regressors[0].col(k).mean()) < 1e-12);
  }
}

TEST_CASE("difference_and_demean is linear in the panel") {
  Rng rng(11);
  const int n = 6, t = 5;
  auto draw = [&]() {
    Matrix m(n, t);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < t; ++k) m(i, k) = rng.normal();
    return m;
  };
  Matrix ya = draw(), yb = draw(), da = draw(), db = draw();
  const double a = 1.7, b = -0.4;

  auto make = [&](const Matrix& y, const Matrix& d) {
    std::vector<RegressorColumn> cols(1);
    cols[0].name = "d";
    cols[0].values = d;
    return PanelData(y, cols);
  };
  auto combo = make(a * ya + b * yb, a * da + b * db);
  std::vector<int> subset = {1, 2, 4, 5};
  auto tp_combo = difference_and_demean(combo, subset, true);
  auto tp_a = difference_and_demean(make(ya, da), subset, true);
  auto tp_b = difference_and_demean(make(yb, db), subset, true);
  CHECK((tp_combo.diff_outcome - a * tp_a.diff_outcome - b * tp_b.diff_outcome)
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK((tp_combo.diff_regressors[0] - a * tp_a.diff_regressors[0] - b * tp_b.diff_regressors[0])
            .cwiseAbs()
            .maxCoeff() < 1e-12);
}

TEST_CASE("demeaned output is invariant to relabeling units within the subset") {
  auto panel = oracle::noiseless_panel(8, 5, 0.5, 1.0, 21);
  std::vector<int> subset = {1, 3, 4, 6};
  std::vector<int> relabeled = {4, 1, 6, 3};
  auto a = difference_and_demean(panel, subset, true);
  auto b = difference_and_demean(panel, relabeled, true);
  // same rows up to the permutation carrying subset -> relabeled
  for (std::size_t r = 0; r < subset.size(); ++r) {
    const auto it = std::find(relabeled.begin(), relabeled.end(), subset[r]);
    const auto rb = static_cast<Eigen::Index>(it - relabeled.begin());
    CHECK((a.diff_outcome.row(static_cast<Eigen::Index>(r)) - b.diff_outcome.row(rb))
              .cwiseAbs()
              .maxCoeff() < 1e-14);
  }
}

TEST_CASE("instrument matrix matches the hand enumeration for the AR(1)+treatment design") {
  auto panel = oracle::noiseless_panel(6, 4, 0.5, 1.0, 5);  // y_l1 with Y first seen at t=1, d
  auto all = panel.all_units();

  auto v3 = build_instrument_matrix(panel, 3, all);
  REQUIRE(v3.m_t() == 4);
  CHECK(v3.columns[0].label == "const");
  CHECK(v3.columns[1].label == "y[1]");
  CHECK(v3.columns[2].label == "d[2]");
  CHECK(v3.columns[3].label == "d[1]");
  CHECK(v3.values.col(0) == Vector::Ones(6));
  CHECK(v3.values.col(1) == panel.outcome().col(0));
  CHECK(v3.values.col(2) == panel.regressors()[1].values.col(1));

  auto v2 = build_instrument_matrix(panel, 2, all);
  REQUIRE(v2.m_t() == 2);  // no observable outcome lag at t=2
  CHECK(v2.columns[1].label == "d[1]");
}

TEST_CASE("observed initial condition enters the instrument set") {
  auto base = oracle::noiseless_panel(6, 4, 0.5, 1.0, 9);
  PanelData panel(base.outcome(), base.regressors(), base.outcome_level(0), 0);
  auto v2 = build_instrument_matrix(panel, 2, panel.all_units());
  REQUIRE(v2.m_t() == 3);
  CHECK(v2.columns[1].label == "y[0]");
  CHECK(v2.values.col(1) == panel.outcome_level(0));
}

TEST_CASE("m_t equals one plus the admissible lag count and is nondecreasing") {
  for (int t_max : {4, 5, 6}) {
    auto panel = oracle::noiseless_panel(5, t_max, 0.4, 0.8, t_max);
    int prev = 0;
    for (int t = 2; t <= t_max; ++t) {
      auto vt = build_instrument_matrix(panel, t, panel.all_units());
      // brute-force enumeration: outcome levels 1..t-2 plus d levels 1..t-1
      const int outcome_lags = std::max(0, t - 2);
      const int d_lags = t - 1;
      CHECK(vt.m_t() == 1 + outcome_lags + d_lags);
      CHECK(vt.m_t() >= prev);
      prev = vt.m_t();
    }
  }
}

TEST_CASE("strictly exogenous columns add future periods as instruments") {
  auto base = oracle::noiseless_panel(6, 5, 0.5, 1.0, 13);
  auto cols = base.regressors();
  cols[1].future_lags = true;
  PanelData panel(base.outcome(), cols, base.outcome_level(0), 1);
  auto v3 = build_instrument_matrix(panel, 3, panel.all_units());
  // const, y[1], d[2], d[1], then the future periods d[3], d[4], d[5]
  REQUIRE(v3.m_t() == 7);
  CHECK(v3.columns[4].label == "d[3]");
  CHECK(v3.columns[6].label == "d[5]");
}

TEST_CASE("out-of-range arguments raise IndexError") {
  auto panel = oracle::noiseless_panel(5, 4, 0.5, 1.0, 2);
  CHECK_THROWS_AS(build_instrument_matrix(panel, 1, panel.all_units()), Error);
  CHECK_THROWS_AS(build_instrument_matrix(panel, 5, panel.all_units()), Error);
  CHECK_THROWS_AS(difference_and_demean(panel, {0, 99}, true), Error);
}

TEST_CASE("build_lagged_model trims the window and keeps pre-window instruments") {
  const int n = 4, t_raw = 8;
  Rng rng(17);
  Matrix y(n, t_raw);
  std::vector<RegressorColumn> cols(1);
  cols[0].name = "d";
  cols[0].values.resize(n, t_raw);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < t_raw; ++k) {
      y(i, k) = rng.normal();
      cols[0].values(i, k) = rng.normal();
    }
  PanelData raw(y, cols);
  PanelData model = build_lagged_model(raw, 2);
  CHECK(model.n_periods() == 6);
  CHECK(model.n_regressors() == 3);
  CHECK(model.regressors()[0].name == "y_l1");
  CHECK(model.regressors()[1].name == "y_l2");
  // lag columns reproduce the shifted outcome series
  CHECK(model.regressors()[0].values(2, 0) == y(2, 1));
  CHECK(model.regressors()[1].values(2, 0) == y(2, 0));
  // instruments at the window start reach back into the raw sample
  auto v2 = build_instrument_matrix(model, 2, model.all_units());
  bool found_first_raw_level = false;
  for (const auto& c : v2.columns)
    if (c.kind == InstrumentColumn::Kind::OutcomeLevel && c.time == -1)
      found_first_raw_level = true;
  CHECK(found_first_raw_level);  // history index -1 = the first raw period
}
