#pragma once

// Finite-population generators for the simulation scenarios S1-S4 and the
// Monte Carlo driver that runs the estimator menu over many replications.
//
// Scenario table:
//   S1: outcome O1, selection NP1
//   S2: outcome O2, selection NP1   (weak identification for the NP baseline)
//   S3: outcome O3, selection NP2   (working selection model misspecified)
//   S4: outcome O1, selection NP1, overlap labels removed (relabel_unlinked)
//
// Outcome models (X ~ N(0,1), Z ~ Bernoulli(0.5), eps ~ N(0, 1/4)):
//   O1: Y = -e^{-2} + cos(2X) + 0.5X + eps
//   O2: Y = 0.8 X + eps
//   O3: Y = 0.2 + 0.8 X - 0.4 Z + eps
// All three have population mean theta_0 = 0.
//
// Selection mechanisms (independent Poisson sampling across units and frames):
//   NP1: logit pi_NP = -2.15 - 0.5 X - 0.75 Y
//   NP2: logit pi_NP = -1.5 - 0.3 cos(2Y) - 0.1 (Y-1)^2
//   P:   logit pi_P  = -3 - 0.25 (X-2)^2
//
// Reproducibility: replication r uses two private mt19937_64 streams,
// Rng::stream(seed, 2r) for the population draw and Rng::stream(seed, 2r+1)
// for the sampling indicators, so replications are bit-identical regardless
// of execution order or thread count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "dualframe/common.hpp"
#include "dualframe/dataset.hpp"
#include "dualframe/dml.hpp"
#include "dualframe/inference.hpp"
#include "dualframe/rng.hpp"

namespace dualframe {

struct ScenarioConfig {
  std::string scenario = "S1";  // S1 | S2 | S3 | S4 | custom
  int n_pop = 10000;
  std::string outcome = "O1";   // O1 | O2 | O3
  std::string np_mech = "NP1";  // NP1 | NP2
  bool relabel = false;         // S4: split every (1,1) record into (1,0) + (0,1)
  std::uint64_t seed = 1;
  int replications = 200;
  bool noise_off = false;  // test hook (eps = 0); deliberately not exposed on the CLI
};

// Canonical generator settings for a named scenario. "custom" keeps defaults
// and lets the caller set outcome / np_mech / relabel directly.
inline ScenarioConfig scenario_defaults(const std::string& name) {
  ScenarioConfig c;
  c.scenario = name;
  if (name == "S1") {
    c.outcome = "O1";
    c.np_mech = "NP1";
  } else if (name == "S2") {
    c.outcome = "O2";
    c.np_mech = "NP1";
  } else if (name == "S3") {
    c.outcome = "O3";
    c.np_mech = "NP2";
  } else if (name == "S4") {
    c.outcome = "O1";
    c.np_mech = "NP1";
    c.relabel = true;
  } else if (name != "custom") {
    throw ArgumentError("unknown scenario '" + name + "' (expected S1, S2, S3, S4, or custom)");
  }
  return c;
}

namespace simdetail {

inline double outcome_value(const std::string& outcome, double x, double z, double eps) {
  if (outcome == "O1") return -std::exp(-2.0) + std::cos(2.0 * x) + 0.5 * x + eps;
  if (outcome == "O2") return 0.8 * x + eps;
  if (outcome == "O3") return 0.2 + 0.8 * x - 0.4 * z + eps;
  throw ArgumentError("unknown outcome model '" + outcome + "' (expected O1, O2, or O3)");
}

inline double np_propensity(const std::string& mech, double x, double y) {
  if (mech == "NP1") return expit(-2.15 - 0.5 * x - 0.75 * y);
  // NP2 involves only Y (implemented as printed).
  if (mech == "NP2") return expit(-1.5 - 0.3 * std::cos(2.0 * y) - 0.1 * (y - 1.0) * (y - 1.0));
  throw ArgumentError("unknown selection mechanism '" + mech + "' (expected NP1 or NP2)");
}

inline double p_propensity(double x) { return expit(-3.0 - 0.25 * (x - 2.0) * (x - 2.0)); }

}  // namespace simdetail

// True finite-population mean of Y is 0 for every outcome model above.
inline double scenario_theta_truth(const ScenarioConfig&) { return 0.0; }

// Working selection-model features for the scenario: (1, x1, y) except under
// O3, which carries the extra covariate (1, x1, x2, y). For S3 this working
// model is misspecified on purpose: the generator uses NP2.
inline std::vector<std::string> scenario_model_features(const ScenarioConfig& cfg) {
  if (cfg.outcome == "O3") return {"1", "x1", "x2", "y"};
  return {"1", "x1", "y"};
}

// True phi for coverage bookkeeping; empty when the working model is
// misspecified (no true value exists).
inline VectorXd scenario_phi_truth(const ScenarioConfig& cfg) {
  if (cfg.np_mech == "NP1" && cfg.outcome != "O3") {
    VectorXd t(3);
    t << -2.15, -0.5, -0.75;
    return t;
  }
  return VectorXd();
}

// Fully observed pre-sampling population: every unit carries delta_np =
// delta_p = 1, its outcome, and its true probability-sample inclusion
// probability. Per-unit draw order is fixed (X, Z, eps) so populations with
// different outcome models share their X and Z realizations.
inline DualFrameDataset gen_population(const ScenarioConfig& cfg, int replication = 0) {
  if (cfg.n_pop <= 0) throw ArgumentError("n_pop must be positive");
  Rng rng = Rng::stream(cfg.seed, 2ull * static_cast<std::uint64_t>(replication));
  const bool with_z = (cfg.outcome == "O3");
  const int n = cfg.n_pop;

  DualFrameDataset ds;
  ds.ids.resize(static_cast<size_t>(n));
  ds.delta_np.assign(static_cast<size_t>(n), 1);
  ds.delta_p.assign(static_cast<size_t>(n), 1);
  ds.pi_p.resize(n);
  ds.y.resize(n);
  ds.x.resize(n, with_z ? 2 : 1);
  ds.covariate_names = with_z ? std::vector<std::string>{"x1", "x2"} : std::vector<std::string>{"x1"};

  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    const double z = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double eps = cfg.noise_off ? 0.0 : rng.normal(0.0, 0.5);
    ds.ids[static_cast<size_t>(i)] = i + 1;
    ds.x(i, 0) = x;
    if (with_z) ds.x(i, 1) = z;
    ds.y[i] = simdetail::outcome_value(cfg.outcome, x, z, eps);
    ds.pi_p[i] = simdetail::p_propensity(x);
  }
  return ds;
}

// Independent Poisson sampling of both frames, then masking: Y is dropped on
// (0,0) records and pi_p is kept only where delta_p = 1. S4 additionally
// splits overlap records. The result passes dataset validation.
inline DualFrameDataset gen_samples(const DualFrameDataset& pop, const ScenarioConfig& cfg, int replication = 0) {
  Rng rng = Rng::stream(cfg.seed, 2ull * static_cast<std::uint64_t>(replication) + 1ull);
  DualFrameDataset ds = pop;
  const int n = ds.n_total();
  for (int i = 0; i < n; ++i) {
    const double y = pop.y[i];
    const double pnp = simdetail::np_propensity(cfg.np_mech, pop.x(i, 0), y);
    const int d_np = rng.uniform() < pnp ? 1 : 0;
    const int d_p = rng.uniform() < pop.pi_p[i] ? 1 : 0;
    ds.delta_np[static_cast<size_t>(i)] = static_cast<std::uint8_t>(d_np);
    ds.delta_p[static_cast<size_t>(i)] = static_cast<std::uint8_t>(d_p);
    if (d_np == 0 && d_p == 0) ds.y[i] = kNaN;
    if (d_p == 0) ds.pi_p[i] = kNaN;
  }
  if (cfg.relabel) ds = relabel_unlinked(ds);
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Monte Carlo driver

struct RepRecord {
  int rep = 0;
  std::string estimator;
  int n_np = 0, n_p = 0, n_union = 0, n_total = 0;
  double theta = kNaN, se = kNaN;
  bool converged = false;
  bool failed = true;
  std::string note;
  VectorXd phi, phi_se;  // empty when the estimator has no phi
};

struct EstimatorSummary {
  std::string estimator;
  McSummary theta;
  int n_failed = 0;
  int n_nonconverged = 0;
  // Aligned with replication index (NaN where failed), for paired tests.
  std::vector<double> theta_hats, theta_ses;
  int dim_phi = 0;
  VectorXd phi_mean;             // over replications with phi available
  VectorXd phi_truth;            // empty when unknown (misspecified model)
  std::vector<double> phi_coverage;  // per component; empty when truth unknown
};

struct ScenarioResult {
  ScenarioConfig cfg;
  double theta_truth = 0.0;
  double alpha = 0.05;
  std::vector<std::string> estimators;  // canonical names, input order
  std::vector<RepRecord> records;       // ordered by (rep, estimator)
  std::vector<EstimatorSummary> summaries;
  double mean_n_np = kNaN, mean_n_p = kNaN, mean_n_union = kNaN;
};

// Accepts the CLI spelling "eff_s" for the sub-efficient estimator.
inline std::string canonical_estimator(const std::string& token) {
  std::string t = token;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "eff_s") return "subeff";
  if (t == "p" || t == "np" || t == "p_np" || t == "subeff" || t == "eff_union" || t == "eff") return t;
  throw ArgumentError("unknown estimator '" + token + "' (expected p, np, p_np, eff_s, eff_union, or eff)");
}

namespace simdetail {

inline std::vector<RepRecord> run_one_rep(const ScenarioConfig& cfg, const std::vector<std::string>& estimators,
                                          const EstimateOptions& base, int rep) {
  std::vector<RepRecord> out;
  out.reserve(estimators.size());
  DualFrameDataset ds;
  std::string gen_note;
  bool gen_ok = true;
  try {
    const DualFrameDataset pop = gen_population(cfg, rep);
    ds = gen_samples(pop, cfg, rep);
  } catch (const std::exception& ex) {
    gen_ok = false;
    gen_note = std::string("generation failed: ") + ex.what();
  }
  for (const std::string& est : estimators) {
    RepRecord rec;
    rec.rep = rep;
    rec.estimator = est;
    if (!gen_ok) {
      rec.note = gen_note;
      out.push_back(rec);
      continue;
    }
    rec.n_np = ds.count_np();
    rec.n_p = ds.count_p();
    rec.n_union = ds.count_union();
    rec.n_total = ds.n_total();
    try {
      EstimateOptions opts = base;
      opts.dml.estimator = est;
      if (opts.model_features.empty()) opts.model_features = scenario_model_features(cfg);
      // Independent fold split per replication.
      opts.dml.seed = splitmix64(base.dml.seed + 0x466f6c64ull) + static_cast<std::uint64_t>(rep);
      const EstimateReport r = estimate(ds, opts);
      rec.theta = r.theta.size() > 0 ? r.theta[0] : kNaN;
      rec.se = r.theta_se.size() > 0 ? r.theta_se[0] : kNaN;
      rec.converged = r.converged;
      rec.failed = false;
      if (!r.converged) rec.note = "non-converged";
      if (r.has_phi) {
        rec.phi = r.phi;
        rec.phi_se = r.phi_se;
      }
    } catch (const std::exception& ex) {
      rec.failed = true;
      rec.note = ex.what();
    }
    out.push_back(rec);
  }
  return out;
}

}  // namespace simdetail

// Runs cfg.replications independent replications, estimating theta (and phi
// where applicable) with every requested estimator. Per-replication failures
// are recorded and the run continues; summaries use the replications with
// finite estimates. Replications run `threads`-wide; results are identical
// for any thread count.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg, const std::vector<std::string>& estimator_tokens,
                                   const EstimateOptions& base = {}, int threads = 1) {
  if (cfg.replications <= 0) throw ArgumentError("replications must be positive");
  if (estimator_tokens.empty()) throw ArgumentError("no estimators requested");
  std::vector<std::string> estimators;
  for (const std::string& t : estimator_tokens) estimators.push_back(canonical_estimator(t));

  const int reps = cfg.replications;
  std::vector<std::vector<RepRecord>> per_rep(static_cast<size_t>(reps));
  const int n_workers = std::max(1, std::min(threads, reps));
  if (n_workers == 1) {
    for (int r = 0; r < reps; ++r) per_rep[static_cast<size_t>(r)] = simdetail::run_one_rep(cfg, estimators, base, r);
  } else {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (;;) {
        const int r = next.fetch_add(1);
        if (r >= reps) break;
        per_rep[static_cast<size_t>(r)] = simdetail::run_one_rep(cfg, estimators, base, r);
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_workers));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  ScenarioResult res;
  res.cfg = cfg;
  res.theta_truth = scenario_theta_truth(cfg);
  res.alpha = base.alpha;
  res.estimators = estimators;
  res.records.reserve(static_cast<size_t>(reps) * estimators.size());
  for (int r = 0; r < reps; ++r)
    for (const RepRecord& rec : per_rep[static_cast<size_t>(r)]) res.records.push_back(rec);

  // Sample-size means over replications with a generated dataset.
  {
    KahanSum snp, sp, su;
    int n_ok = 0;
    for (int r = 0; r < reps; ++r) {
      const RepRecord& first = per_rep[static_cast<size_t>(r)].front();
      if (first.n_total == 0) continue;
      snp.add(first.n_np);
      sp.add(first.n_p);
      su.add(first.n_union);
      ++n_ok;
    }
    if (n_ok > 0) {
      res.mean_n_np = snp.value() / n_ok;
      res.mean_n_p = sp.value() / n_ok;
      res.mean_n_union = su.value() / n_ok;
    }
  }

  const VectorXd phi_truth = scenario_phi_truth(cfg);
  const double z = norm_quantile(1.0 - base.alpha / 2.0);
  for (size_t e = 0; e < estimators.size(); ++e) {
    EstimatorSummary s;
    s.estimator = estimators[e];
    s.theta_hats.assign(static_cast<size_t>(reps), kNaN);
    s.theta_ses.assign(static_cast<size_t>(reps), kNaN);
    KahanVec phi_acc(0);
    std::vector<int> phi_cover;
    int phi_n = 0;
    for (int r = 0; r < reps; ++r) {
      const RepRecord& rec = per_rep[static_cast<size_t>(r)][e];
      if (rec.failed) {
        ++s.n_failed;
        continue;
      }
      // A non-converged solve is recorded in the replication detail but kept
      // out of every summary statistic (the Table-6-note convention: only
      // replications with trustworthy interval endpoints are tallied).
      if (!rec.converged) {
        ++s.n_nonconverged;
        continue;
      }
      s.theta_hats[static_cast<size_t>(r)] = rec.theta;
      s.theta_ses[static_cast<size_t>(r)] = rec.se;
      if (rec.phi.size() > 0) {
        if (s.dim_phi == 0) {
          s.dim_phi = static_cast<int>(rec.phi.size());
          phi_acc = KahanVec(s.dim_phi);
          phi_cover.assign(static_cast<size_t>(s.dim_phi), 0);
        }
        if (rec.phi.size() == s.dim_phi && rec.phi.allFinite()) {
          phi_acc.add(rec.phi);
          ++phi_n;
          if (phi_truth.size() == s.dim_phi && rec.phi_se.allFinite())
            for (int j = 0; j < s.dim_phi; ++j)
              if (std::abs(rec.phi[j] - phi_truth[j]) <= z * rec.phi_se[j]) ++phi_cover[static_cast<size_t>(j)];
        }
      }
    }
    s.theta = mc_summary(s.theta_hats, s.theta_ses, res.theta_truth, base.alpha);
    if (s.dim_phi > 0 && phi_n > 0) {
      s.phi_mean = phi_acc.value() / static_cast<double>(phi_n);
      if (phi_truth.size() == s.dim_phi) {
        s.phi_truth = phi_truth;
        for (int j = 0; j < s.dim_phi; ++j)
          s.phi_coverage.push_back(static_cast<double>(phi_cover[static_cast<size_t>(j)]) / phi_n);
      }
    }
    res.summaries.push_back(std::move(s));
  }
  return res;
}

// ---------------------------------------------------------------------------
// CSV export (per-replication detail, estimator summaries, coverage table)

namespace simdetail {

inline std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

inline std::string fmt(double v) { return std::isfinite(v) ? dualframe::detail::format_double(v) : std::string(); }

inline int max_phi_dim(const ScenarioResult& res) {
  int d = 0;
  for (const EstimatorSummary& s : res.summaries) d = std::max(d, s.dim_phi);
  return d;
}

}  // namespace simdetail

inline void write_replication_csv(const ScenarioResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open file for writing: " + path);
  const int dp = simdetail::max_phi_dim(res);
  out << "scenario,rep,estimator,n_np,n_p,n_union,theta_hat,theta_se,ci_lo,ci_hi,converged,failed,note";
  for (int j = 1; j <= dp; ++j) out << ",phi_" << j;
  for (int j = 1; j <= dp; ++j) out << ",phi_se_" << j;
  out << '\n';
  for (const RepRecord& r : res.records) {
    out << res.cfg.scenario << ',' << r.rep << ',' << r.estimator << ',' << r.n_np << ',' << r.n_p << ','
        << r.n_union << ',' << simdetail::fmt(r.theta) << ',' << simdetail::fmt(r.se) << ',';
    if (std::isfinite(r.theta) && std::isfinite(r.se)) {
      const ConfInterval ci = wald_interval(r.theta, r.se, res.alpha);
      out << simdetail::fmt(ci.lo) << ',' << simdetail::fmt(ci.hi);
    } else {
      out << ',';
    }
    out << ',' << (r.converged ? 1 : 0) << ',' << (r.failed ? 1 : 0) << ',' << simdetail::csv_safe(r.note);
    for (int j = 0; j < dp; ++j) out << ',' << (j < r.phi.size() ? simdetail::fmt(r.phi[j]) : std::string());
    for (int j = 0; j < dp; ++j) out << ',' << (j < r.phi_se.size() ? simdetail::fmt(r.phi_se[j]) : std::string());
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

inline void write_summary_csv(const ScenarioResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open file for writing: " + path);
  out << "scenario,estimator,n_reps,n_used,n_failed,n_nonconverged,mean,bias,sd,rmse,mean_se,coverage,"
         "mean_n_np,mean_n_p,mean_n_union\n";
  for (const EstimatorSummary& s : res.summaries) {
    out << res.cfg.scenario << ',' << s.estimator << ',' << s.theta.n_total << ',' << s.theta.n_used << ','
        << s.n_failed << ',' << s.n_nonconverged << ',' << simdetail::fmt(s.theta.mean) << ','
        << simdetail::fmt(s.theta.bias) << ',' << simdetail::fmt(s.theta.sd) << ',' << simdetail::fmt(s.theta.rmse)
        << ',' << simdetail::fmt(s.theta.mean_se) << ',' << simdetail::fmt(s.theta.coverage) << ','
        << simdetail::fmt(res.mean_n_np) << ',' << simdetail::fmt(res.mean_n_p) << ','
        << simdetail::fmt(res.mean_n_union) << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

inline void write_coverage_csv(const ScenarioResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open file for writing: " + path);
  out << "scenario,estimator,parameter,truth,mean_est,coverage\n";
  for (const EstimatorSummary& s : res.summaries) {
    out << res.cfg.scenario << ',' << s.estimator << ",theta," << simdetail::fmt(res.theta_truth) << ','
        << simdetail::fmt(s.theta.mean) << ',' << simdetail::fmt(s.theta.coverage) << '\n';
    for (size_t j = 0; j < s.phi_coverage.size(); ++j)
      out << res.cfg.scenario << ',' << s.estimator << ",phi_" << (j + 1) << ','
          << simdetail::fmt(s.phi_truth[static_cast<int>(j)]) << ','
          << simdetail::fmt(s.phi_mean[static_cast<int>(j)]) << ',' << simdetail::fmt(s.phi_coverage[j]) << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

}  // namespace dualframe
