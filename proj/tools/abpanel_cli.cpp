// Command-line front end: data ingestion, estimator dispatch, DGP simulation
// and Monte Carlo tables. Outputs are a pure function of the inputs.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "abpanel/abpanel.hpp"

namespace {

using abpanel::Json;

struct Settings {
  // shared
  std::string input, config_path, out, json_out, audit_out;
  std::string method = "ab-lasso-ss";
  std::uint64_t seed = 0;
  int threads = 0;
  double confidence = 0.95;

  // model spec
  std::string outcome = "y";
  int lags = 0;
  std::string regressors;        // comma list; empty = all data columns
  std::string self_instrument;   // comma list of Self-mode columns
  std::string future_lag_cols;   // comma list of strictly exogenous columns
  std::string long_run;          // comma list of effect columns

  // first stage / estimator
  double penalty_c = 1.0;
  double alpha_mass = 0.1;
  std::string lag_weighting = "uniform";
  bool no_post_lasso = false;
  std::string first_stage = "lasso";
  int k_folds = 5;
  int n_splits = 10;
  std::string aggregation = "median";
  std::string variance_fits = "full";
  bool no_split_se = false;

  // gmm
  long moment_cap = 10000;
  int gmm_steps = 2;
  std::string gmm_step1 = "h";
  std::string gmm_step2 = "clustered";

  // highdim
  double ell_scale = 0.5;
  double ell = -1.0;  // >= 0 overrides the rate default
  bool cross_fit = false;

  // simulate / montecarlo
  int n_units = 200;
  int t_periods = 30;
  int reps = 100;
  std::string estimators = "ab-gmm,ab-lasso,ab-lasso-ss:k=5";
  double rho = 0.5, theta1 = 0.8, theta2 = 1.0;
  double sigma_alpha = 1.0, sigma_gamma = 1.0, error_corr = 0.5;
  int burn_in = 10;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

void apply_config_file(Settings& s) {
  if (s.config_path.empty()) return;
  std::ifstream in(s.config_path);
  abpanel::require(in.good(), abpanel::ErrorKind::BadParameter,
                   "cannot open config file '" + s.config_path + "'");
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    abpanel::fail(abpanel::ErrorKind::BadParameter,
                  "config file is not valid JSON: " + std::string(e.what()));
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("input", s.input);
  get("out", s.out);
  get("json_out", s.json_out);
  get("audit_out", s.audit_out);
  get("method", s.method);
  get("seed", s.seed);
  get("threads", s.threads);
  get("confidence", s.confidence);
  get("outcome", s.outcome);
  get("lags", s.lags);
  get("regressors", s.regressors);
  get("self_instrument", s.self_instrument);
  get("future_lag_cols", s.future_lag_cols);
  get("long_run", s.long_run);
  get("penalty_c", s.penalty_c);
  get("alpha_mass", s.alpha_mass);
  get("lag_weighting", s.lag_weighting);
  get("no_post_lasso", s.no_post_lasso);
  get("first_stage", s.first_stage);
  get("k_folds", s.k_folds);
  get("n_splits", s.n_splits);
  get("aggregation", s.aggregation);
  get("variance_fits", s.variance_fits);
  get("no_split_se", s.no_split_se);
  get("moment_cap", s.moment_cap);
  get("gmm_steps", s.gmm_steps);
  get("gmm_step1", s.gmm_step1);
  get("gmm_step2", s.gmm_step2);
  get("ell_scale", s.ell_scale);
  get("ell", s.ell);
  get("cross_fit", s.cross_fit);
  get("n", s.n_units);
  get("t", s.t_periods);
  get("reps", s.reps);
  get("estimators", s.estimators);
  get("rho", s.rho);
  get("theta1", s.theta1);
  get("theta2", s.theta2);
  get("sigma_alpha", s.sigma_alpha);
  get("sigma_gamma", s.sigma_gamma);
  get("error_corr", s.error_corr);
  get("burn_in", s.burn_in);
}

abpanel::FirstStageConfig first_stage_config(const Settings& s) {
  abpanel::FirstStageConfig fs;
  fs.penalty_c = s.penalty_c;
  fs.alpha_mass = s.alpha_mass;
  if (s.lag_weighting == "distance")
    fs.lag_weighting = abpanel::LagWeighting::Distance;
  else
    abpanel::require(s.lag_weighting == "uniform", abpanel::ErrorKind::BadParameter,
                     "lag_weighting must be 'uniform' or 'distance'");
  fs.post_lasso = !s.no_post_lasso;
  if (s.first_stage == "ols")
    fs.kind = abpanel::FirstStageKind::Ols;
  else
    abpanel::require(s.first_stage == "lasso", abpanel::ErrorKind::BadParameter,
                     "first_stage must be 'lasso' or 'ols'");
  return fs;
}

abpanel::EstimatorConfig estimator_config(const Settings& s) {
  abpanel::EstimatorConfig cfg;
  cfg.first_stage = first_stage_config(s);
  cfg.confidence = s.confidence;
  if (s.variance_fits == "last-split")
    cfg.variance_fits = abpanel::VarianceFits::LastSplitFits;
  else
    abpanel::require(s.variance_fits == "full", abpanel::ErrorKind::BadParameter,
                     "variance_fits must be 'full' or 'last-split'");
  cfg.split_dispersion_se = !s.no_split_se;
  return cfg;
}

abpanel::CrossFitPlan cross_fit_plan(const Settings& s) {
  abpanel::CrossFitPlan plan;
  plan.k_folds = s.k_folds;
  plan.n_splits = s.n_splits;
  plan.seed = s.seed;
  if (s.aggregation == "mean")
    plan.aggregation = abpanel::Aggregation::Mean;
  else
    abpanel::require(s.aggregation == "median", abpanel::ErrorKind::BadParameter,
                     "aggregation must be 'median' or 'mean'");
  return plan;
}

abpanel::GmmConfig gmm_config(const Settings& s) {
  abpanel::GmmConfig g;
  g.moment_cap = s.moment_cap;
  g.confidence = s.confidence;
  abpanel::require(s.gmm_steps == 1 || s.gmm_steps == 2, abpanel::ErrorKind::BadParameter,
                   "gmm_steps must be 1 or 2");
  g.two_step = s.gmm_steps == 2;
  if (s.gmm_step1 == "gram")
    g.step1 = abpanel::Step1Weighting::InstrumentGram;
  else
    abpanel::require(s.gmm_step1 == "h", abpanel::ErrorKind::BadParameter,
                     "gmm_step1 must be 'h' or 'gram'");
  if (s.gmm_step2 == "per-period")
    g.step2 = abpanel::Step2Weighting::PerPeriodRobust;
  else
    abpanel::require(s.gmm_step2 == "clustered", abpanel::ErrorKind::BadParameter,
                     "gmm_step2 must be 'clustered' or 'per-period'");
  return g;
}

abpanel::DgpConfig dgp_config(const Settings& s) {
  abpanel::DgpConfig cfg;
  cfg.rho = s.rho;
  cfg.theta1 = s.theta1;
  cfg.theta2 = s.theta2;
  cfg.sigma_alpha = s.sigma_alpha;
  cfg.sigma_gamma = s.sigma_gamma;
  cfg.error_corr = s.error_corr;
  cfg.burn_in = s.burn_in;
  cfg.seed = s.seed;
  return cfg;
}

abpanel::PanelData load_model_panel(const Settings& s) {
  abpanel::require(!s.input.empty(), abpanel::ErrorKind::BadParameter,
                   "estimate needs --input (or \"input\" in the config file)");
  std::ifstream in(s.input);
  abpanel::require(in.good(), abpanel::ErrorKind::BadParameter,
                   "cannot open input file '" + s.input + "'");
  abpanel::CsvPanel csv = abpanel::read_panel_csv(in, s.outcome);

  std::vector<std::string> wanted =
      s.regressors.empty() ? csv.columns : split_list(s.regressors);
  std::vector<int> col_of;
  for (const auto& name : wanted) {
    auto it = std::find(csv.columns.begin(), csv.columns.end(), name);
    abpanel::require(it != csv.columns.end(), abpanel::ErrorKind::BadParameter,
                     "CSV has no regressor column named '" + name + "'");
    col_of.push_back(static_cast<int>(it - csv.columns.begin()));
  }
  std::vector<abpanel::PanelRow> rows = csv.rows;
  for (auto& row : rows) {
    std::vector<double> selected;
    selected.reserve(col_of.size());
    for (int c : col_of) selected.push_back(row.regressors[static_cast<std::size_t>(c)]);
    row.regressors = std::move(selected);
  }

  std::vector<abpanel::InstrumentMode> modes(wanted.size(), abpanel::InstrumentMode::Project);
  for (const auto& name : split_list(s.self_instrument)) {
    auto it = std::find(wanted.begin(), wanted.end(), name);
    abpanel::require(it != wanted.end(), abpanel::ErrorKind::BadParameter,
                     "--self-instrument column '" + name + "' is not a model regressor");
    modes[static_cast<std::size_t>(it - wanted.begin())] = abpanel::InstrumentMode::Self;
  }
  abpanel::PanelData raw = abpanel::load_panel(rows, wanted, modes);

  if (!s.future_lag_cols.empty()) {
    std::vector<abpanel::RegressorColumn> cols = raw.regressors();
    for (const auto& name : split_list(s.future_lag_cols)) {
      bool found = false;
      for (auto& c : cols)
        if (c.name == name) {
          c.future_lags = true;
          found = true;
        }
      abpanel::require(found, abpanel::ErrorKind::BadParameter,
                       "--future-lags column '" + name + "' is not a model regressor");
    }
    raw = abpanel::PanelData(raw.outcome(), std::move(cols));
  }
  return abpanel::build_lagged_model(raw, s.lags, s.outcome);
}

void print_result_table(std::ostream& os, const abpanel::EstimateResult& res) {
  os << "method: " << abpanel::method_name(res.method) << "\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %12s %12s %12s %12s\n", "coefficient", "estimate",
                "std.err", "ci.lower", "ci.upper");
  os << buf;
  for (Eigen::Index k = 0; k < res.theta.size(); ++k) {
    const std::string name = k < static_cast<Eigen::Index>(res.coefficient_names.size())
                                 ? res.coefficient_names[static_cast<std::size_t>(k)]
                                 : ("theta[" + std::to_string(k) + "]");
    std::snprintf(buf, sizeof(buf), "%-16s %12.6f %12.6f %12.6f %12.6f\n", name.c_str(),
                  res.theta[k], res.std_errors[k], res.ci_lower[k], res.ci_upper[k]);
    os << buf;
  }
  for (const auto& lr : res.long_run) {
    std::snprintf(buf, sizeof(buf), "%-16s %12.6f %12.6f   (long run)\n", lr.label.c_str(),
                  lr.estimate, lr.std_error);
    os << buf;
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  abpanel::require(out.good(), abpanel::ErrorKind::BadParameter,
                   "cannot open output file '" + path + "'");
  out << text;
}

int run_estimate(const Settings& s) {
  const abpanel::PanelData panel = load_model_panel(s);
  abpanel::EstimateResult res;
  std::vector<abpanel::DantzigSummary> dantzig;
  if (s.method == "ab-lasso") {
    res = abpanel::ab_lasso(panel, estimator_config(s));
  } else if (s.method == "ab-lasso-ss") {
    res = abpanel::ab_lasso_ss(panel, cross_fit_plan(s), estimator_config(s));
  } else if (s.method == "ab-gmm") {
    res = abpanel::ab_gmm_two_step(panel, gmm_config(s));
  } else if (s.method == "dab-ss") {
    res = abpanel::dab_ss(panel, s.seed, gmm_config(s));
  } else if (s.method == "general") {
    abpanel::GeneralConfig cfg;
    cfg.base = estimator_config(s);
    cfg.ell_scale = s.ell_scale;
    if (s.ell >= 0.0) {
      cfg.ell_override = true;
      cfg.ell_value = s.ell;
    }
    cfg.cross_fit = s.cross_fit;
    cfg.plan = cross_fit_plan(s);
    auto general = abpanel::general_estimate(panel, cfg);
    res = std::move(general.result);
    dantzig = std::move(general.dantzig);
  } else {
    abpanel::fail(abpanel::ErrorKind::BadParameter,
                  "unknown method '" + s.method +
                      "' (expected ab-lasso, ab-lasso-ss, ab-gmm, dab-ss or general)");
  }

  if (!s.long_run.empty()) {
    std::vector<int> effects, lag_idx;
    std::vector<std::string> labels;
    for (const auto& name : split_list(s.long_run)) {
      auto it = std::find(res.coefficient_names.begin(), res.coefficient_names.end(), name);
      abpanel::require(it != res.coefficient_names.end(), abpanel::ErrorKind::BadParameter,
                       "--long-run column '" + name + "' has no estimated coefficient");
      effects.push_back(static_cast<int>(it - res.coefficient_names.begin()));
      labels.push_back(name);
    }
    for (std::size_t k = 0; k < res.coefficient_names.size(); ++k) {
      // outcome-lag coefficients produced by --lags are named <outcome>_l<j>
      const std::string prefix = s.outcome + "_l";
      if (res.coefficient_names[k].rfind(prefix, 0) == 0)
        lag_idx.push_back(static_cast<int>(k));
    }
    res.long_run = abpanel::long_run_effects(res, effects, lag_idx, labels);
  }

  Json j = abpanel::result_to_json(res);
  j["metadata"]["input"] = s.input;
  j["metadata"]["n_units"] = panel.n_units();
  j["metadata"]["n_periods"] = panel.n_periods();
  if (!dantzig.empty()) {
    Json dz = Json::array();
    for (const auto& d : dantzig)
      dz.push_back({{"t", d.period}, {"ell", d.tuning}, {"slack", d.slack}, {"l1", d.l1_norm}});
    j["dantzig"] = std::move(dz);
  }
  if (s.out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_text(s.out, j.dump(2) + "\n");
    print_result_table(std::cout, res);
  }
  return 0;
}

int run_simulate(const Settings& s) {
  const abpanel::PanelData panel = abpanel::simulate_dgp(dgp_config(s), s.n_units, s.t_periods);
  std::ostringstream os;
  abpanel::write_panel_csv(os, panel, "y");
  if (s.out.empty())
    std::cout << os.str();
  else
    write_text(s.out, os.str());
  return 0;
}

std::vector<abpanel::EstimatorSpec> parse_estimators(const Settings& s) {
  std::vector<abpanel::EstimatorSpec> specs;
  for (const auto& token : split_list(s.estimators)) {
    std::vector<std::string> parts;
    std::stringstream ss(token);
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(p);
    abpanel::require(!parts.empty(), abpanel::ErrorKind::BadParameter, "empty estimator token");

    abpanel::EstimatorSpec spec;
    spec.name = token;
    spec.config = estimator_config(s);
    spec.gmm = gmm_config(s);
    spec.plan = cross_fit_plan(s);
    const std::string& kind = parts[0];
    if (kind == "ab" || kind == "ab-gmm") {
      spec.method = abpanel::Method::ABGMM;
    } else if (kind == "ab-lasso") {
      spec.method = abpanel::Method::ABLasso;
    } else if (kind == "ab-ols") {
      spec.method = abpanel::Method::ABLasso;
      spec.config.first_stage.kind = abpanel::FirstStageKind::Ols;
    } else if (kind == "ab-lasso-ss") {
      spec.method = abpanel::Method::ABLassoSS;
    } else if (kind == "ab-ols-ss") {
      spec.method = abpanel::Method::ABLassoSS;
      spec.config.first_stage.kind = abpanel::FirstStageKind::Ols;
    } else if (kind == "dab-ss") {
      spec.method = abpanel::Method::DABSS;
    } else if (kind == "oracle") {
      spec.method = abpanel::Method::Oracle;
    } else {
      abpanel::fail(abpanel::ErrorKind::BadParameter, "unknown estimator '" + kind + "'");
    }
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const auto eq = parts[i].find('=');
      abpanel::require(eq != std::string::npos, abpanel::ErrorKind::BadParameter,
                       "estimator option '" + parts[i] + "' is not key=value");
      const std::string key = parts[i].substr(0, eq);
      const std::string value = parts[i].substr(eq + 1);
      if (key == "k")
        spec.plan.k_folds = std::stoi(value);
      else if (key == "splits")
        spec.plan.n_splits = std::stoi(value);
      else
        abpanel::fail(abpanel::ErrorKind::BadParameter,
                      "unknown estimator option '" + key + "' (expected k or splits)");
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

int run_montecarlo(const Settings& s) {
  const auto specs = parse_estimators(s);
  const abpanel::MonteCarloSummary summary =
      abpanel::monte_carlo(dgp_config(s), s.n_units, s.t_periods, specs, s.reps, s.seed, s.threads);

  std::ostringstream csv;
  abpanel::write_summary_csv(csv, summary);
  if (s.out.empty())
    std::cout << csv.str();
  else
    write_text(s.out, csv.str());
  if (!s.json_out.empty()) write_text(s.json_out, abpanel::summary_to_json(summary).dump(2) + "\n");
  if (!s.audit_out.empty()) {
    std::ostringstream audit;
    abpanel::write_audit_csv(audit, summary);
    write_text(s.audit_out, audit.str());
  }
  if (!s.out.empty()) abpanel::write_summary_table(std::cout, summary);
  if (summary.failure_warning)
    std::cerr << "warning: more than 1% of estimator runs failed; see the audit output\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  if (const char* env = std::getenv("ABPANEL_THREADS")) s.threads = std::atoi(env);

  // the config file provides defaults; explicit flags override it
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") s.config_path = argv[i + 1];
  try {
    apply_config_file(s);
  } catch (const abpanel::Error& e) {
    std::cout << abpanel::error_to_json(e.kind(), e.what()).dump(2) << "\n";
    return 2;
  }

  CLI::App app{"Dynamic panel estimators with LASSO-selected instruments"};
  app.require_subcommand(1);
  std::string config_dummy;
  app.add_option("--config", config_dummy, "JSON config file with defaults for any flag");

  auto add_shared = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_dummy, "JSON config file with defaults for any flag");
    cmd->add_option("--seed", s.seed, "RNG seed");
    cmd->add_option("--threads", s.threads, "worker thread cap (default: ABPANEL_THREADS or all)");
    cmd->add_option("--out", s.out, "output path");
  };
  auto add_estimator_opts = [&](CLI::App* cmd) {
    cmd->add_option("--method", s.method, "ab-lasso | ab-lasso-ss | ab-gmm | dab-ss | general");
    cmd->add_option("--k-folds", s.k_folds, "cross-fitting folds");
    cmd->add_option("--n-splits", s.n_splits, "random split repetitions");
    cmd->add_option("--aggregation", s.aggregation, "median | mean");
    cmd->add_option("--confidence", s.confidence, "confidence level");
    cmd->add_option("--penalty-c", s.penalty_c, "penalty constant c");
    cmd->add_option("--alpha-mass", s.alpha_mass, "penalty tail mass");
    cmd->add_option("--lag-weighting", s.lag_weighting, "uniform | distance");
    cmd->add_flag("--no-post-lasso", s.no_post_lasso, "skip the post-selection refit");
    cmd->add_option("--first-stage", s.first_stage, "lasso | ols");
    cmd->add_option("--variance-fits", s.variance_fits, "full | last-split");
    cmd->add_flag("--no-split-se", s.no_split_se, "plain plug-in SEs without split dispersion");
    cmd->add_option("--moment-cap", s.moment_cap, "maximum GMM moment count");
    cmd->add_option("--gmm-steps", s.gmm_steps, "1 | 2");
    cmd->add_option("--gmm-step1", s.gmm_step1, "h | gram");
    cmd->add_option("--gmm-step2", s.gmm_step2, "clustered | per-period");
    cmd->add_option("--ell", s.ell, "Dantzig tuning (overrides the rate default)");
    cmd->add_option("--ell-scale", s.ell_scale, "Dantzig rate-default scale");
    cmd->add_flag("--cross-fit", s.cross_fit, "cross-fitted general estimator");
  };

  CLI::App* estimate = app.add_subcommand("estimate", "estimate a model from a CSV panel");
  estimate->add_option("--input", s.input, "long-format CSV (unit,time,...)");
  estimate->add_option("--outcome", s.outcome, "outcome column name");
  estimate->add_option("--lags", s.lags, "number of outcome lags to build");
  estimate->add_option("--regressors", s.regressors, "comma list (default: all data columns)");
  estimate->add_option("--self-instrument", s.self_instrument,
                       "columns instrumenting themselves (the X2 block)");
  estimate->add_option("--future-lags", s.future_lag_cols,
                       "strictly exogenous columns whose future periods also instrument");
  estimate->add_option("--long-run", s.long_run, "columns to report long-run effects for");
  add_estimator_opts(estimate);
  add_shared(estimate);

  CLI::App* simulate = app.add_subcommand("simulate", "write a simulated panel CSV");
  simulate->add_option("--n", s.n_units, "units");
  simulate->add_option("--t", s.t_periods, "periods");
  simulate->add_option("--rho", s.rho, "treatment AR coefficient");
  simulate->add_option("--theta1", s.theta1, "outcome AR coefficient");
  simulate->add_option("--theta2", s.theta2, "treatment effect");
  simulate->add_option("--sigma-alpha", s.sigma_alpha, "unit effect std dev");
  simulate->add_option("--sigma-gamma", s.sigma_gamma, "time effect std dev");
  simulate->add_option("--error-corr", s.error_corr, "corr(e_{t-1}, v_t)");
  simulate->add_option("--burn-in", s.burn_in, "discarded warm-up periods");
  add_shared(simulate);

  CLI::App* montecarlo = app.add_subcommand("montecarlo", "replicate estimators over the DGP");
  montecarlo->add_option("--n", s.n_units, "units");
  montecarlo->add_option("--t", s.t_periods, "periods");
  montecarlo->add_option("--reps", s.reps, "replications");
  montecarlo->add_option("--estimators", s.estimators,
                         "comma list, e.g. ab-gmm,ab-lasso,ab-lasso-ss:k=5:splits=10");
  montecarlo->add_option("--rho", s.rho, "treatment AR coefficient");
  montecarlo->add_option("--theta1", s.theta1, "outcome AR coefficient");
  montecarlo->add_option("--theta2", s.theta2, "treatment effect");
  montecarlo->add_option("--sigma-alpha", s.sigma_alpha, "unit effect std dev");
  montecarlo->add_option("--sigma-gamma", s.sigma_gamma, "time effect std dev");
  montecarlo->add_option("--error-corr", s.error_corr, "corr(e_{t-1}, v_t)");
  montecarlo->add_option("--burn-in", s.burn_in, "discarded warm-up periods");
  montecarlo->add_option("--json-out", s.json_out, "summary JSON path");
  montecarlo->add_option("--audit-out", s.audit_out, "per-replication CSV path");
  add_shared(montecarlo);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cout << abpanel::error_to_json(abpanel::ErrorKind::BadParameter, e.what()).dump(2)
              << "\n";
    return 2;
  }

  try {
    if (estimate->parsed()) return run_estimate(s);
    if (simulate->parsed()) return run_simulate(s);
    if (montecarlo->parsed()) return run_montecarlo(s);
    abpanel::fail(abpanel::ErrorKind::BadParameter, "no subcommand given");
  } catch (const abpanel::Error& e) {
    std::cout << abpanel::error_to_json(e.kind(), e.what()).dump(2) << "\n";
    switch (e.kind()) {
      case abpanel::ErrorKind::DuplicateCell:
      case abpanel::ErrorKind::UnbalancedPanel:
      case abpanel::ErrorKind::BadValue:
      case abpanel::ErrorKind::BadParameter:
      case abpanel::ErrorKind::BadPlan:
        return 2;
      default:
        return 3;
    }
  } catch (const std::exception& e) {
    std::cout << abpanel::error_to_json(abpanel::ErrorKind::Internal, e.what()).dump(2) << "\n";
    return 3;
  }
  return 0;
}
