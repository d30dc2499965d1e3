// dualframe — command-line front end.
//
// Subcommands:
//   simulate                  scenario Monte Carlo; writes per-replication,
//                             summary, and coverage CSVs
//   estimate                  one CSV dataset -> JSON estimate report
//   diagnose-identifiability  sampling-model local-monotonicity check;
//                             prints one PASS/FAIL verdict line
//   report                    re-aggregate a per-replication CSV
//
// Exit codes: 0 success; 1 validation/config/IO error; 2 estimation did not
// converge and --strict was given. A FAIL verdict from the identifiability
// diagnostic is a successful diagnosis and exits 0.
//
// Every flag can also be supplied through --config <file.json>; explicit
// flags override config values, and unknown config keys are rejected.

#include <dualframe/dualframe.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace {

using nlohmann::json;
using namespace dualframe;

constexpr const char* kVersion = "dualframe 0.1.0";

struct Logger {
  bool quiet = false;
  void line(const std::string& msg) const {
    if (!quiet) std::cerr << msg << '\n';
  }
};

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    // trim spaces
    size_t b = cur.find_first_not_of(" \t");
    size_t e = cur.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const std::string& tok : split_commas(s)) {
    try {
      size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ArgumentError(what + ": cannot parse '" + tok + "' as a number");
    }
  }
  return out;
}

json load_json_file(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ArgumentError(what + ": cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw ArgumentError(what + ": invalid JSON in " + path + ": " + ex.what());
  }
  return j;
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ArgumentError(where + ": expected a JSON object");
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ArgumentError(where + ": unknown key '" + item.key() + "'");
}

std::vector<std::string> string_list(const json& v, const std::string& where) {
  std::vector<std::string> out;
  if (v.is_string()) return split_commas(v.get<std::string>());
  if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_string()) throw ArgumentError(where + ": expected strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }
  throw ArgumentError(where + ": expected a string or array of strings");
}

// ---------------------------------------------------------------------------
// Shared estimation settings (flags + config overlay used by simulate and
// estimate).

struct EstimationCli {
  // bound flag storage; CLI11 count() decides whether a flag was given
  int folds = 5;
  std::string variant = "dml2";
  double alpha = 0.05;
  std::string gtilde = "mar";
  std::string model_features;
  std::string g_features;
  std::string phi_init;
  int max_iter = 100;
  double tol = 1e-8;
  int max_refresh = 5;
  double refresh_tol = 1e-6;
  double clip_eps = 1e-3;
  double krr_bandwidth = 0.0;
  std::string krr_lambda_grid;
  int krr_min_cell_rows = 20;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--folds", folds, "Cross-fitting folds K (default 5)");
    cmd->add_option("--variant", variant, "Cross-fitting variant: dml1 | dml2 (default dml2)");
    cmd->add_option("--alpha", alpha, "CI level is 1 - alpha (default 0.05)");
    cmd->add_option("--gtilde", gtilde, "g-tilde variant: mar | linkage (default mar)");
    cmd->add_option("--model-features", model_features,
                    "Sampling-model features, comma list (e.g. '1,x1,y'); default: 1, covariates, y");
    cmd->add_option("--g-features", g_features,
                    "Calibration functions g(x) for np/p_np, comma list (default: 1, linear, squares)");
    cmd->add_option("--phi-init", phi_init, "Initial phi, comma list (default: zeros)");
    cmd->add_option("--max-iter", max_iter, "Newton iteration cap (default 100)");
    cmd->add_option("--tol", tol, "Convergence tolerance on the sup-norm (default 1e-8)");
    cmd->add_option("--max-refresh", max_refresh, "Augmentation refresh cap in the eff path (default 5)");
    cmd->add_option("--refresh-tol", refresh_tol, "Refresh loop stopping tolerance (default 1e-6)");
    cmd->add_option("--clip-eps", clip_eps, "Probability clip for the logistic model (default 1e-3)");
    cmd->add_option("--krr-bandwidth", krr_bandwidth, "Kernel bandwidth; <= 0 means median heuristic");
    cmd->add_option("--krr-lambda-grid", krr_lambda_grid, "GCV penalty grid, comma list (default 1e-4..1)");
    cmd->add_option("--krr-min-cell-rows", krr_min_cell_rows,
                    "Smallest per-category cell fitted separately (default 20)");
  }

  static const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys = {"folds",       "variant",     "alpha",    "gtilde",
                                               "model_features", "g_features", "phi_init", "max_iter",
                                               "tol",         "max_refresh", "refresh_tol", "clip_eps",
                                               "krr",         "h4",          "solver"};
    return keys;
  }

  // Fill opts from config JSON first (only keys present), then from any flag
  // the user actually passed (flags win).
  void apply(const CLI::App* cmd, const json& cfg, EstimateOptions& opts) const {
    if (!cfg.is_null()) {
      if (cfg.contains("folds")) opts.dml.folds = cfg.at("folds").get<int>();
      if (cfg.contains("variant")) opts.dml.variant = cfg.at("variant").get<std::string>();
      if (cfg.contains("alpha")) opts.alpha = cfg.at("alpha").get<double>();
      if (cfg.contains("gtilde")) {
        const json& g = cfg.at("gtilde");
        if (g.is_string()) {
          opts.gtilde_variant = g.get<std::string>();
        } else {
          reject_unknown_keys(g, {"variant"}, "config.gtilde");
          if (g.contains("variant")) opts.gtilde_variant = g.at("variant").get<std::string>();
        }
      }
      if (cfg.contains("model_features")) opts.model_features = string_list(cfg.at("model_features"), "config.model_features");
      if (cfg.contains("g_features")) opts.g_features = string_list(cfg.at("g_features"), "config.g_features");
      if (cfg.contains("phi_init")) {
        std::vector<double> v = cfg.at("phi_init").get<std::vector<double>>();
        opts.phi_init = Eigen::Map<const VectorXd>(v.data(), static_cast<int>(v.size()));
      }
      if (cfg.contains("max_iter")) opts.solver.max_iter = cfg.at("max_iter").get<int>();
      if (cfg.contains("tol")) opts.solver.tol = cfg.at("tol").get<double>();
      if (cfg.contains("max_refresh")) opts.max_refresh = cfg.at("max_refresh").get<int>();
      if (cfg.contains("refresh_tol")) opts.refresh_tol = cfg.at("refresh_tol").get<double>();
      if (cfg.contains("clip_eps")) opts.clip_eps = cfg.at("clip_eps").get<double>();
      if (cfg.contains("krr")) {
        const json& k = cfg.at("krr");
        reject_unknown_keys(k, {"lambda_grid", "bandwidth", "min_cell_rows"}, "config.krr");
        if (k.contains("lambda_grid")) opts.nuisance.krr.lambda_grid = k.at("lambda_grid").get<std::vector<double>>();
        if (k.contains("bandwidth")) opts.nuisance.krr.bandwidth = k.at("bandwidth").get<double>();
        if (k.contains("min_cell_rows")) opts.nuisance.krr.min_cell_rows = k.at("min_cell_rows").get<int>();
      }
      if (cfg.contains("h4")) {
        const json& h = cfg.at("h4");
        reject_unknown_keys(h, {"representation"}, "config.h4");
        if (h.contains("representation") && h.at("representation").get<std::string>() != "union")
          throw ArgumentError("config.h4.representation: only 'union' is implemented");
      }
      if (cfg.contains("solver")) {
        const json& s = cfg.at("solver");
        reject_unknown_keys(s, {"max_iter", "tol", "max_halvings", "fd_step_scale", "max_step"}, "config.solver");
        if (s.contains("max_iter")) opts.solver.max_iter = s.at("max_iter").get<int>();
        if (s.contains("tol")) opts.solver.tol = s.at("tol").get<double>();
        if (s.contains("max_halvings")) opts.solver.max_halvings = s.at("max_halvings").get<int>();
        if (s.contains("fd_step_scale")) opts.solver.fd_step_scale = s.at("fd_step_scale").get<double>();
        if (s.contains("max_step")) opts.solver.max_step = s.at("max_step").get<double>();
      }
    }
    if (cmd->count("--folds")) opts.dml.folds = folds;
    if (cmd->count("--variant")) opts.dml.variant = variant;
    if (cmd->count("--alpha")) opts.alpha = alpha;
    if (cmd->count("--gtilde")) opts.gtilde_variant = gtilde;
    if (cmd->count("--model-features")) opts.model_features = split_commas(model_features);
    if (cmd->count("--g-features")) opts.g_features = split_commas(g_features);
    if (cmd->count("--phi-init")) {
      std::vector<double> v = parse_doubles(phi_init, "--phi-init");
      opts.phi_init = Eigen::Map<const VectorXd>(v.data(), static_cast<int>(v.size()));
    }
    if (cmd->count("--max-iter")) opts.solver.max_iter = max_iter;
    if (cmd->count("--tol")) opts.solver.tol = tol;
    if (cmd->count("--max-refresh")) opts.max_refresh = max_refresh;
    if (cmd->count("--refresh-tol")) opts.refresh_tol = refresh_tol;
    if (cmd->count("--clip-eps")) opts.clip_eps = clip_eps;
    if (cmd->count("--krr-bandwidth")) opts.nuisance.krr.bandwidth = krr_bandwidth;
    if (cmd->count("--krr-lambda-grid")) opts.nuisance.krr.lambda_grid = parse_doubles(krr_lambda_grid, "--krr-lambda-grid");
    if (cmd->count("--krr-min-cell-rows")) opts.nuisance.krr.min_cell_rows = krr_min_cell_rows;
    if (opts.alpha <= 0.0 || opts.alpha >= 1.0) throw ArgumentError("alpha must be in (0,1)");
  }
};

struct SchemaCli {
  CsvSchema schema;
  void add_flags(CLI::App* cmd) {
    cmd->add_option("--col-id", schema.id, "CSV column holding the record id (default 'id')");
    cmd->add_option("--col-delta-np", schema.delta_np, "Column for the non-probability indicator");
    cmd->add_option("--col-delta-p", schema.delta_p, "Column for the probability indicator");
    cmd->add_option("--col-pi-p", schema.pi_p, "Column for the probability-sample inclusion probability");
    cmd->add_option("--col-y", schema.y, "Column for the outcome");
  }
};

json vector_to_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json ci_to_json(const std::vector<ConfInterval>& cis) {
  json a = json::array();
  for (const ConfInterval& ci : cis) a.push_back(json::array({ci.lo, ci.hi}));
  return a;
}

json report_to_json(const EstimateReport& rep) {
  json j;
  j["estimator"] = rep.estimator;
  j["alpha"] = rep.alpha;
  j["n"] = {{"total", rep.n_total}, {"np", rep.n_np}, {"p", rep.n_p}, {"union", rep.n_union}};
  j["theta"] = vector_to_json(rep.theta);
  j["theta_se"] = vector_to_json(rep.theta_se);
  j["theta_ci"] = ci_to_json(rep.theta_ci);
  if (rep.has_phi) {
    j["phi"] = vector_to_json(rep.phi);
    j["phi_se"] = vector_to_json(rep.phi_se);
    j["phi_ci"] = ci_to_json(rep.phi_ci);
  }
  json vc = json::array();
  for (int r = 0; r < rep.vcov.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < rep.vcov.cols(); ++c) row.push_back(rep.vcov(r, c));
    vc.push_back(row);
  }
  j["vcov"] = vc;
  j["converged"] = rep.converged;
  j["step2_accepted"] = rep.step2_accepted;
  j["used_pseudo_inverse"] = rep.used_pseudo_inverse;
  j["refreshes"] = rep.refreshes;
  j["iterations"] = rep.iterations;
  j["final_norm"] = rep.final_norm;
  j["pibar_clamp_count"] = rep.pibar_clamp_count;
  return j;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string scenario = "S1";
  int n_pop = 10000;
  int reps = 200;
  std::uint64_t seed = 1;
  std::string estimators = "p,np,p_np,eff_s,eff_union,eff";
  std::string out_dir = "results";
  int threads = 0;
  std::string config_path;
  EstimationCli est;
};

int run_simulate(const CLI::App* cmd, SimulateArgs& a, Logger& log) {
  json cfg;
  if (!a.config_path.empty()) {
    cfg = load_json_file(a.config_path, "--config");
    std::set<std::string> allowed = EstimationCli::config_keys();
    allowed.insert({"scenario", "n_pop", "reps", "seed", "estimators", "out", "threads"});
    reject_unknown_keys(cfg, allowed, "config");
    if (!cmd->count("--scenario") && cfg.contains("scenario")) a.scenario = cfg.at("scenario").get<std::string>();
    if (!cmd->count("--n-pop") && cfg.contains("n_pop")) a.n_pop = cfg.at("n_pop").get<int>();
    if (!cmd->count("--reps") && cfg.contains("reps")) a.reps = cfg.at("reps").get<int>();
    if (!cmd->count("--seed") && cfg.contains("seed")) a.seed = cfg.at("seed").get<std::uint64_t>();
    if (!cmd->count("--estimators") && cfg.contains("estimators")) {
      std::vector<std::string> toks = string_list(cfg.at("estimators"), "config.estimators");
      std::string joined;
      for (const std::string& t : toks) joined += (joined.empty() ? "" : ",") + t;
      a.estimators = joined;
    }
    if (!cmd->count("--out") && cfg.contains("out")) a.out_dir = cfg.at("out").get<std::string>();
    if (!cmd->count("--threads") && cfg.contains("threads")) a.threads = cfg.at("threads").get<int>();
  }

  ScenarioConfig sc = scenario_defaults(a.scenario);
  sc.n_pop = a.n_pop;
  sc.seed = a.seed;
  sc.replications = a.reps;
  if (sc.n_pop < 2) throw ArgumentError("--n-pop must be at least 2");
  if (sc.replications < 1) throw ArgumentError("--reps must be at least 1");

  EstimateOptions base;
  base.dml.seed = a.seed;
  a.est.apply(cmd, cfg, base);

  const std::vector<std::string> estimators = split_commas(a.estimators);
  if (estimators.empty()) throw ArgumentError("--estimators: empty list");

  int threads = a.threads > 0 ? a.threads : static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;

  log.line("simulate: scenario " + sc.scenario + ", " + std::to_string(sc.replications) + " replications, N=" +
           std::to_string(sc.n_pop) + ", seed " + std::to_string(sc.seed) + ", " + std::to_string(threads) +
           " thread(s)");
  const ScenarioResult res = run_scenario(sc, estimators, base, threads);

  std::filesystem::create_directories(a.out_dir);
  const std::string prefix = (std::filesystem::path(a.out_dir) / sc.scenario).string();
  write_replication_csv(res, prefix + "_replications.csv");
  write_summary_csv(res, prefix + "_summary.csv");
  write_coverage_csv(res, prefix + "_coverage.csv");
  log.line("simulate: wrote " + prefix + "_replications.csv, _summary.csv, _coverage.csv");
  for (const EstimatorSummary& s : res.summaries) {
    std::ostringstream line;
    line << "  " << s.estimator << ": mean " << s.theta.mean << ", sd " << s.theta.sd << ", coverage "
         << s.theta.coverage;
    if (s.n_failed > 0) line << ", " << s.n_failed << " failed";
    if (s.n_nonconverged > 0) line << ", " << s.n_nonconverged << " non-converged";
    log.line(line.str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
  std::string data_path;
  std::string estimator = "eff";
  std::uint64_t seed = 1;
  std::string out_path;  // empty -> stdout
  bool strict = false;
  std::string config_path;
  EstimationCli est;
  SchemaCli schema;
};

int run_estimate(const CLI::App* cmd, EstimateArgs& a, Logger& log) {
  json cfg;
  if (!a.config_path.empty()) {
    cfg = load_json_file(a.config_path, "--config");
    std::set<std::string> allowed = EstimationCli::config_keys();
    allowed.insert({"data", "estimator", "seed", "out", "strict", "schema"});
    reject_unknown_keys(cfg, allowed, "config");
    if (!cmd->count("--data") && cfg.contains("data")) a.data_path = cfg.at("data").get<std::string>();
    if (!cmd->count("--estimator") && cfg.contains("estimator")) a.estimator = cfg.at("estimator").get<std::string>();
    if (!cmd->count("--seed") && cfg.contains("seed")) a.seed = cfg.at("seed").get<std::uint64_t>();
    if (!cmd->count("--out") && cfg.contains("out")) a.out_path = cfg.at("out").get<std::string>();
    if (!cmd->count("--strict") && cfg.contains("strict")) a.strict = cfg.at("strict").get<bool>();
    if (cfg.contains("schema")) {
      const json& s = cfg.at("schema");
      reject_unknown_keys(s, {"id", "delta_np", "delta_p", "pi_p", "y"}, "config.schema");
      if (!cmd->count("--col-id") && s.contains("id")) a.schema.schema.id = s.at("id").get<std::string>();
      if (!cmd->count("--col-delta-np") && s.contains("delta_np"))
        a.schema.schema.delta_np = s.at("delta_np").get<std::string>();
      if (!cmd->count("--col-delta-p") && s.contains("delta_p"))
        a.schema.schema.delta_p = s.at("delta_p").get<std::string>();
      if (!cmd->count("--col-pi-p") && s.contains("pi_p")) a.schema.schema.pi_p = s.at("pi_p").get<std::string>();
      if (!cmd->count("--col-y") && s.contains("y")) a.schema.schema.y = s.at("y").get<std::string>();
    }
  }
  if (a.data_path.empty()) throw ArgumentError("--data is required");

  const DualFrameDataset ds = load_csv(a.data_path, a.schema.schema);
  log.line("estimate: loaded " + a.data_path + " (" + std::to_string(ds.n_total()) + " records, " +
           std::to_string(ds.count_np()) + " NP, " + std::to_string(ds.count_p()) + " P)");

  EstimateOptions opts;
  opts.dml.estimator = canonical_estimator(a.estimator);
  opts.dml.seed = a.seed;
  a.est.apply(cmd, cfg, opts);

  const EstimateReport rep = estimate(ds, opts);
  const json j = report_to_json(rep);
  if (a.out_path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::ofstream out(a.out_path);
    if (!out) throw Error("cannot open file for writing: " + a.out_path);
    out << j.dump(2) << '\n';
    if (!out) throw Error("write failed: " + a.out_path);
    log.line("estimate: wrote " + a.out_path);
  }
  if (!rep.converged) {
    log.line("estimate: solver did not converge" + std::string(a.strict ? " (--strict: exit 2)" : ""));
    if (a.strict) return 2;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// diagnose-identifiability

struct DiagnoseArgs {
  std::string data_path;
  std::string model_path;
  int draws = 20;
  double radius = 0.5;
  std::uint64_t seed = 1;
  double fd_step = 1e-5;
  SchemaCli schema;
};

int run_diagnose(DiagnoseArgs& a, Logger& log) {
  if (a.data_path.empty()) throw ArgumentError("--data is required");
  if (a.model_path.empty()) throw ArgumentError("--model is required");
  const DualFrameDataset ds = load_csv(a.data_path, a.schema.schema);

  const json mj = load_json_file(a.model_path, "--model");
  reject_unknown_keys(mj, {"features", "phi", "clip_eps"}, "model file");
  if (!mj.contains("features")) throw ArgumentError("model file: missing 'features'");
  const std::vector<std::string> feats = string_list(mj.at("features"), "model.features");
  const FeatureMap fm = FeatureMap::parse(feats, ds.covariate_names);
  const double clip_eps = mj.contains("clip_eps") ? mj.at("clip_eps").get<double>() : 1e-3;
  VectorXd center = VectorXd::Zero(fm.dim());
  if (mj.contains("phi")) {
    std::vector<double> v = mj.at("phi").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != fm.dim())
      throw ArgumentError("model file: phi has " + std::to_string(v.size()) + " entries but the feature map has " +
                          std::to_string(fm.dim()));
    center = Eigen::Map<const VectorXd>(v.data(), static_cast<int>(v.size()));
  }
  const LogisticSamplingModel model(center, fm, clip_eps);

  // Working pi_bar fitted on the full probability subsample: the diagnostic
  // probes the population equation, so no cross-fitting is involved.
  const PiBarModel pb = fit_pi_bar(ds, krr_mean_learner());
  VectorXd pibar(ds.n_total());
  for (int r = 0; r < ds.n_total(); ++r) pibar[r] = pb.predict(ds.x.row(r));

  const VectorFn eq = identification_equation(ds, model, pibar);
  const MonotonicityReport rep = monotonicity_diagnostic(eq, center, a.radius, a.draws, a.seed, a.fd_step);

  for (size_t i = 0; i < rep.max_eigenvalues.size(); ++i) {
    std::ostringstream line;
    line << "  draw " << (i + 1) << ": max sym-Jacobian eigenvalue " << rep.max_eigenvalues[i];
    log.line(line.str());
  }
  for (const std::string& note : rep.notes) log.line("  note: " + note);
  std::ostringstream verdict;
  verdict << (rep.pass ? "PASS" : "FAIL") << " worst max sym-Jacobian eigenvalue " << rep.worst_max_eigenvalue
          << " over " << a.draws << " draw(s)";
  std::cout << verdict.str() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// report (re-aggregate a per-replication CSV)

struct ReportArgs {
  std::string in_path;
  double truth = std::numeric_limits<double>::quiet_NaN();
  double alpha = 0.05;
  std::string out_dir = ".";
};

struct ReplicationRows {
  std::vector<double> theta, se;
  int n_rows = 0, n_failed = 0, n_nonconverged = 0;
  KahanSum n_np, n_p, n_union;
  int n_counts = 0;
};

int run_report(const CLI::App* cmd, ReportArgs& a, Logger& log) {
  std::ifstream in(a.in_path);
  if (!in) throw ArgumentError("--in: cannot open file: " + a.in_path);
  std::string header;
  if (!std::getline(in, header)) throw ArgumentError("--in: empty file: " + a.in_path);
  const std::vector<std::string> cols = detail::split_csv_line(header);
  std::map<std::string, int> col;
  for (size_t i = 0; i < cols.size(); ++i) col[cols[i]] = static_cast<int>(i);
  for (const char* need : {"scenario", "estimator", "theta_hat", "theta_se"})
    if (!col.count(need)) throw ArgumentError("--in: missing column '" + std::string(need) + "'");
  const bool have_flags = col.count("failed") && col.count("converged");
  const bool have_counts = col.count("n_np") && col.count("n_p") && col.count("n_union");

  auto num = [](const std::string& f) {
    if (f.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::stod(f);
  };

  std::vector<std::string> order;  // first-seen (scenario, estimator) keys
  std::map<std::string, ReplicationRows> groups;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() < cols.size()) throw ArgumentError("--in: short row with " + std::to_string(f.size()) + " fields");
    const std::string key = f[static_cast<size_t>(col["scenario"])] + "," + f[static_cast<size_t>(col["estimator"])];
    auto it = groups.find(key);
    if (it == groups.end()) {
      order.push_back(key);
      it = groups.emplace(key, ReplicationRows{}).first;
    }
    ReplicationRows& g = it->second;
    ++g.n_rows;
    const bool failed = have_flags && f[static_cast<size_t>(col["failed"])] == "1";
    if (failed) {
      ++g.n_failed;
    } else if (have_flags && f[static_cast<size_t>(col["converged"])] == "0") {
      // Same convention as the simulation summaries: non-converged solves are
      // counted but kept out of the summary statistics.
      ++g.n_nonconverged;
    } else {
      g.theta.push_back(num(f[static_cast<size_t>(col["theta_hat"])]));
      g.se.push_back(num(f[static_cast<size_t>(col["theta_se"])]));
    }
    if (have_counts) {
      g.n_np.add(num(f[static_cast<size_t>(col["n_np"])]));
      g.n_p.add(num(f[static_cast<size_t>(col["n_p"])]));
      g.n_union.add(num(f[static_cast<size_t>(col["n_union"])]));
      ++g.n_counts;
    }
  }
  if (groups.empty()) throw ArgumentError("--in: no data rows in " + a.in_path);

  const bool have_truth = cmd->count("--truth") > 0;
  std::filesystem::create_directories(a.out_dir);
  const std::string stem = std::filesystem::path(a.in_path).stem().string();
  const std::string csv_path = (std::filesystem::path(a.out_dir) / (stem + "_summary.csv")).string();
  const std::string json_path = (std::filesystem::path(a.out_dir) / (stem + "_summary.json")).string();

  auto fmt = [](double v) { return std::isfinite(v) ? detail::format_double(v) : std::string(); };

  std::ofstream csv(csv_path);
  if (!csv) throw Error("cannot open file for writing: " + csv_path);
  csv << "scenario,estimator,n_reps,n_used,n_failed,n_nonconverged,mean,bias,sd,rmse,mean_se,coverage,"
         "mean_n_np,mean_n_p,mean_n_union\n";
  json jout = json::array();
  for (const std::string& key : order) {
    const ReplicationRows& g = groups.at(key);
    const size_t comma = key.find(',');
    const std::string scenario = key.substr(0, comma), estimator = key.substr(comma + 1);
    McSummary s = mc_summary(g.theta, g.se, have_truth ? a.truth : 0.0, a.alpha);
    if (!have_truth) s.bias = s.rmse = s.coverage = std::numeric_limits<double>::quiet_NaN();
    const double mnp = g.n_counts ? g.n_np.value() / g.n_counts : std::numeric_limits<double>::quiet_NaN();
    const double mp = g.n_counts ? g.n_p.value() / g.n_counts : std::numeric_limits<double>::quiet_NaN();
    const double mu = g.n_counts ? g.n_union.value() / g.n_counts : std::numeric_limits<double>::quiet_NaN();
    csv << scenario << ',' << estimator << ',' << g.n_rows << ',' << s.n_used << ',' << g.n_failed << ','
        << g.n_nonconverged << ',' << fmt(s.mean) << ',' << fmt(s.bias) << ',' << fmt(s.sd) << ',' << fmt(s.rmse)
        << ',' << fmt(s.mean_se) << ',' << fmt(s.coverage) << ',' << fmt(mnp) << ',' << fmt(mp) << ',' << fmt(mu)
        << '\n';
    json row;
    row["scenario"] = scenario;
    row["estimator"] = estimator;
    row["n_reps"] = g.n_rows;
    row["n_used"] = s.n_used;
    row["n_failed"] = g.n_failed;
    row["n_nonconverged"] = g.n_nonconverged;
    row["mean"] = s.mean;
    row["bias"] = s.bias;
    row["sd"] = s.sd;
    row["rmse"] = s.rmse;
    row["mean_se"] = s.mean_se;
    row["coverage"] = s.coverage;
    row["mean_n_np"] = mnp;
    row["mean_n_p"] = mp;
    row["mean_n_union"] = mu;
    jout.push_back(row);
  }
  if (!csv) throw Error("write failed: " + csv_path);
  csv.close();
  std::ofstream js(json_path);
  if (!js) throw Error("cannot open file for writing: " + json_path);
  js << jout.dump(2) << '\n';
  if (!js) throw Error("write failed: " + json_path);
  log.line("report: wrote " + csv_path + " and " + json_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Replication-level threading owns all cores; keep BLAS single-threaded.
  setenv("OPENBLAS_NUM_THREADS", "1", 0);

  CLI::App app{"dualframe: finite-population estimation from a probability and a non-probability sample"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Logger log;

  SimulateArgs sim;
  CLI::App* csim = app.add_subcommand("simulate", "Run a Monte Carlo scenario and write CSV results");
  csim->add_option("--scenario", sim.scenario, "Scenario: S1 | S2 | S3 | S4 (default S1)");
  csim->add_option("--n-pop", sim.n_pop, "Population size per replication (default 10000)");
  csim->add_option("--reps", sim.reps, "Number of replications (default 200)");
  csim->add_option("--seed", sim.seed, "Master seed (default 1)");
  csim->add_option("--estimators", sim.estimators,
                   "Comma list from p, np, p_np, eff_s, eff_union, eff (default: all)");
  csim->add_option("--out", sim.out_dir, "Output directory (default 'results')");
  csim->add_option("--threads", sim.threads, "Worker threads (default: available cores)");
  csim->add_option("--config", sim.config_path, "JSON config file; flags override");
  csim->add_flag("--quiet", log.quiet, "Suppress progress output");
  sim.est.add_flags(csim);

  EstimateArgs est;
  CLI::App* cest = app.add_subcommand("estimate", "Estimate from a CSV dataset and write a JSON report");
  cest->add_option("--data", est.data_path, "Input CSV (id,delta_np,delta_p,pi_p,y,x1,...)");
  cest->add_option("--estimator", est.estimator, "p | np | p_np | eff_s | eff_union | eff (default eff)");
  cest->add_option("--seed", est.seed, "Fold-split seed (default 1)");
  cest->add_option("--out", est.out_path, "Report JSON path (default: stdout)");
  cest->add_flag("--strict", est.strict, "Exit 2 when the solver does not converge");
  cest->add_option("--config", est.config_path, "JSON config file; flags override");
  cest->add_flag("--quiet", log.quiet, "Suppress progress output");
  est.est.add_flags(cest);
  est.schema.add_flags(cest);

  DiagnoseArgs dia;
  CLI::App* cdia = app.add_subcommand("diagnose-identifiability",
                                      "Probe local monotonicity of the sampling-model equation");
  cdia->add_option("--data", dia.data_path, "Input CSV (id,delta_np,delta_p,pi_p,y,x1,...)");
  cdia->add_option("--model", dia.model_path, "Model JSON: {\"features\": [...], \"phi\": [...], \"clip_eps\": x}");
  cdia->add_option("--draws", dia.draws, "Probe points around phi (default 20)");
  cdia->add_option("--radius", dia.radius, "Uniform probe radius per component (default 0.5)");
  cdia->add_option("--seed", dia.seed, "Probe RNG seed (default 1)");
  cdia->add_option("--fd-step", dia.fd_step, "Finite-difference step scale (default 1e-5)");
  cdia->add_flag("--quiet", log.quiet, "Suppress per-draw output");
  dia.schema.add_flags(cdia);

  ReportArgs repa;
  CLI::App* crep = app.add_subcommand("report", "Re-aggregate a per-replication CSV into summary CSV + JSON");
  crep->add_option("--in", repa.in_path, "Per-replication CSV from 'simulate'")->required();
  crep->add_option("--truth", repa.truth, "True parameter value for bias/RMSE/coverage");
  crep->add_option("--alpha", repa.alpha, "CI level is 1 - alpha (default 0.05)");
  crep->add_option("--out", repa.out_dir, "Output directory (default '.')");
  crep->add_flag("--quiet", log.quiet, "Suppress progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (csim->parsed()) return run_simulate(csim, sim, log);
    if (cest->parsed()) return run_estimate(cest, est, log);
    if (cdia->parsed()) return run_diagnose(dia, log);
    if (crep->parsed()) return run_report(crep, repa, log);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 1;
}
