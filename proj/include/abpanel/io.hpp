#pragma once

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "abpanel/core.hpp"
#include "abpanel/estimate.hpp"
#include "abpanel/panel.hpp"
#include "abpanel/simulate.hpp"

namespace abpanel {

using Json = nlohmann::json;

inline constexpr int kResultSchemaVersion = 1;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    require(pos == s.size(), ErrorKind::BadValue, "trailing characters in " + what + ": '" + s + "'");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(ErrorKind::BadValue, "cannot parse " + what + ": '" + s + "'");
  }
}

inline long long parse_long(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    require(pos == s.size(), ErrorKind::BadValue, "trailing characters in " + what + ": '" + s + "'");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(ErrorKind::BadValue, "cannot parse " + what + ": '" + s + "'");
  }
}

/// Shortest round-trip decimal representation; keeps artifacts byte-stable.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void set_number(Json& j, const std::string& key, double value, Json& notes) {
  if (std::isfinite(value)) {
    j[key] = value;
  } else {
    j[key] = nullptr;
    notes.push_back(key + " is non-finite");
  }
}

}  // namespace detail

struct CsvPanel {
  std::vector<std::string> columns;  // regressor column names, header order
  std::vector<PanelRow> rows;
};

/// Long-format loader: header `unit,time,<outcome>,<regressors...>`, any row
/// order. `outcome_column` selects which data column is the outcome.
inline CsvPanel read_panel_csv(std::istream& in, const std::string& outcome_column = "y") {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::BadValue, "empty CSV input");
  if (!line.empty() && line.front() == '\xEF') line = line.substr(3);  // strip UTF-8 BOM
  const std::vector<std::string> header = detail::split_csv_line(line);
  require(header.size() >= 3, ErrorKind::BadValue,
          "CSV header needs at least unit,time and one data column");
  require(header[0] == "unit" && header[1] == "time", ErrorKind::BadValue,
          "CSV header must start with 'unit,time'");
  int outcome_idx = -1;
  for (std::size_t k = 2; k < header.size(); ++k)
    if (header[k] == outcome_column) outcome_idx = static_cast<int>(k);
  require(outcome_idx >= 0, ErrorKind::BadValue,
          "CSV is missing the outcome column '" + outcome_column + "'");

  CsvPanel out;
  for (std::size_t k = 2; k < header.size(); ++k)
    if (static_cast<int>(k) != outcome_idx) out.columns.push_back(header[k]);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> fields = detail::split_csv_line(line);
    require(fields.size() == header.size(), ErrorKind::BadValue,
            "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                " fields, got " + std::to_string(fields.size()));
    PanelRow row;
    row.unit = fields[0];
    row.time = detail::parse_long(fields[1], "time id");
    for (std::size_t k = 2; k < fields.size(); ++k) {
      const double v = detail::parse_double(fields[k], "column '" + header[k] + "'");
      if (static_cast<int>(k) == outcome_idx)
        row.outcome = v;
      else
        row.regressors.push_back(v);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

/// Writes the observable series of a panel (outcome plus plain regressor
/// columns; derived lag columns are omitted).
inline void write_panel_csv(std::ostream& os, const PanelData& panel,
                            const std::string& outcome_name = "y") {
  os << "unit,time," << outcome_name;
  for (const auto& col : panel.regressors())
    if (col.outcome_lag == 0) os << "," << col.name;
  os << "\n";
  for (int i = 0; i < panel.n_units(); ++i) {
    for (int t = 1; t <= panel.n_periods(); ++t) {
      os << (i + 1) << "," << t << "," << detail::format_double(panel.outcome()(i, t - 1));
      for (const auto& col : panel.regressors())
        if (col.outcome_lag == 0) os << "," << detail::format_double(col.values(i, t - 1));
      os << "\n";
    }
  }
}

inline Json result_to_json(const EstimateResult& res) {
  Json j;
  Json notes = Json::array();
  j["schema_version"] = kResultSchemaVersion;
  j["method"] = method_name(res.method);
  j["confidence"] = res.confidence;
  if (res.k_folds > 0) j["k_folds"] = res.k_folds;
  if (res.n_splits > 0) j["n_splits"] = res.n_splits;
  j["seed"] = res.seed;

  Json coefs = Json::array();
  for (Eigen::Index k = 0; k < res.theta.size(); ++k) {
    Json c;
    c["name"] = k < static_cast<Eigen::Index>(res.coefficient_names.size())
                    ? res.coefficient_names[static_cast<std::size_t>(k)]
                    : ("theta[" + std::to_string(k) + "]");
    detail::set_number(c, "estimate", res.theta[k], notes);
    detail::set_number(c, "std_error", res.std_errors[k], notes);
    detail::set_number(c, "ci_lower", res.ci_lower[k], notes);
    detail::set_number(c, "ci_upper", res.ci_upper[k], notes);
    coefs.push_back(std::move(c));
  }
  j["coefficients"] = std::move(coefs);

  if (!res.long_run.empty()) {
    Json lr = Json::array();
    const double z = normal_quantile(0.5 * (1.0 + res.confidence));
    for (const auto& effect : res.long_run) {
      Json e;
      e["label"] = effect.label;
      detail::set_number(e, "estimate", effect.estimate, notes);
      detail::set_number(e, "std_error", effect.std_error, notes);
      detail::set_number(e, "ci_lower", effect.estimate - z * effect.std_error, notes);
      detail::set_number(e, "ci_upper", effect.estimate + z * effect.std_error, notes);
      lr.push_back(std::move(e));
    }
    j["long_run"] = std::move(lr);
  }

  if (!res.first_stage.empty()) {
    Json fs = Json::array();
    for (const auto& ps : res.first_stage) {
      Json p;
      p["t"] = ps.period;
      p["m_t"] = ps.m_t;
      detail::set_number(p, "penalty", ps.penalty, notes);
      p["support_sizes"] = ps.support_sizes;
      fs.push_back(std::move(p));
    }
    j["first_stage"] = std::move(fs);
  }

  Json meta;
  meta["weighting_regularized"] = res.weighting_regularized;
  if (res.moment_count > 0) meta["moment_count"] = res.moment_count;
  j["metadata"] = std::move(meta);
  if (!notes.empty()) j["notes"] = std::move(notes);
  return j;
}

inline Json error_to_json(ErrorKind kind, const std::string& message) {
  Json j;
  j["schema_version"] = kResultSchemaVersion;
  j["error"] = {{"kind", error_kind_name(kind)}, {"message", message}};
  return j;
}

inline void write_summary_csv(std::ostream& os, const MonteCarloSummary& summary) {
  os << "estimator,coefficient,true_value,n_reps,failures,rmse,std_dev,bias,ci_length,coverage,"
        "rmse_norm,std_dev_norm,bias_norm,ci_length_norm\n";
  for (const auto& row : summary.rows) {
    const double denom = std::fabs(row.true_value) > 0.0 ? std::fabs(row.true_value) : 1.0;
    os << row.estimator << "," << row.coefficient_name << ","
       << detail::format_double(row.true_value) << "," << row.n_reps << "," << row.failures << ","
       << detail::format_double(row.rmse) << "," << detail::format_double(row.std_dev) << ","
       << detail::format_double(row.bias) << "," << detail::format_double(row.ci_length) << ","
       << detail::format_double(row.coverage) << "," << detail::format_double(row.rmse / denom)
       << "," << detail::format_double(row.std_dev / denom) << ","
       << detail::format_double(row.bias / denom) << ","
       << detail::format_double(row.ci_length / denom) << "\n";
  }
}

inline Json summary_to_json(const MonteCarloSummary& summary) {
  Json j;
  j["schema_version"] = kResultSchemaVersion;
  j["n_reps"] = summary.n_reps;
  j["failure_warning"] = summary.failure_warning;
  Json rows = Json::array();
  Json notes = Json::array();
  for (const auto& row : summary.rows) {
    Json r;
    r["estimator"] = row.estimator;
    r["coefficient"] = row.coefficient_name;
    r["true_value"] = row.true_value;
    r["n_reps"] = row.n_reps;
    r["failures"] = row.failures;
    detail::set_number(r, "rmse", row.rmse, notes);
    detail::set_number(r, "std_dev", row.std_dev, notes);
    detail::set_number(r, "bias", row.bias, notes);
    detail::set_number(r, "ci_length", row.ci_length, notes);
    detail::set_number(r, "coverage", row.coverage, notes);
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  if (!notes.empty()) j["notes"] = std::move(notes);
  return j;
}

inline void write_audit_csv(std::ostream& os, const MonteCarloSummary& summary) {
  os << "rep,estimator,status,error,theta_y_l1,theta_d,se_y_l1,se_d\n";
  for (const auto& rec : summary.reps) {
    os << rec.rep << "," << rec.estimator << "," << (rec.ok ? "ok" : "failed") << ",";
    if (!rec.ok) {
      std::string msg = rec.error;
      for (auto& ch : msg)
        if (ch == ',' || ch == '\n') ch = ';';
      os << msg << ",,,,\n";
      continue;
    }
    os << "," << detail::format_double(rec.theta[0]) << "," << detail::format_double(rec.theta[1])
       << "," << detail::format_double(rec.std_errors[0]) << ","
       << detail::format_double(rec.std_errors[1]) << "\n";
  }
}

/// Plain-text summary table in the estimators-by-metrics layout, normalized
/// by the true values.
inline void write_summary_table(std::ostream& os, const MonteCarloSummary& summary) {
  std::vector<std::string> estimators;
  for (const auto& row : summary.rows)
    if (std::find(estimators.begin(), estimators.end(), row.estimator) == estimators.end())
      estimators.push_back(row.estimator);
  const char* metrics[] = {"rmse", "std_dev", "bias", "ci_length", "coverage"};

  for (int coef = 0; coef < 2; ++coef) {
    std::string coef_name;
    double truth = 0.0;
    for (const auto& row : summary.rows)
      if (row.coefficient == coef) {
        coef_name = row.coefficient_name;
        truth = row.true_value;
      }
    os << "coefficient " << coef_name << " (true " << truth << ", metrics divided by |true|)\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-12s", "");
    os << buf;
    for (const auto& est : estimators) {
      std::snprintf(buf, sizeof(buf), " %14s", est.c_str());
      os << buf;
    }
    os << "\n";
    for (const char* metric : metrics) {
      std::snprintf(buf, sizeof(buf), "%-12s", metric);
      os << buf;
      for (const auto& est : estimators) {
        for (const auto& row : summary.rows) {
          if (row.estimator != est || row.coefficient != coef) continue;
          const double denom = std::fabs(row.true_value) > 0.0 ? std::fabs(row.true_value) : 1.0;
          double value = 0.0;
          if (std::string(metric) == "rmse") value = row.rmse / denom;
          if (std::string(metric) == "std_dev") value = row.std_dev / denom;
          if (std::string(metric) == "bias") value = row.bias / denom;
          if (std::string(metric) == "ci_length") value = row.ci_length / denom;
          if (std::string(metric) == "coverage") value = row.coverage;
          std::snprintf(buf, sizeof(buf), " %14.3f", value);
          os << buf;
        }
      }
      os << "\n";
    }
    os << "\n";
  }
}

}  // namespace abpanel
