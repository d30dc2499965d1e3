#pragma once

// Estimation orchestrator: dispatches the estimator menu, runs the
// cross-fitted two-step pipeline for the efficient scores, and assembles
// sandwich variances into an EstimateReport.
//
// Estimators:
//   "p"         inverse-probability weighting over the probability sample
//   "np"        calibration fit of phi (functions g(X)), then IPW over the
//               non-probability sample
//   "p_np"      union-calibration fit of phi, then IPW over the union
//   "eff"       efficient scores with cross-fitted (pi_bar, h4, eta4),
//               two-step phi with refreshable augmentation, joint sandwich
//   "eff_union" the efficient pipeline with h4 and eta4 forced to zero
//   "subeff"    sub-efficient score with cross-fitted gtilde (no phi model)
//
// Cross-fitting: DML2 solves pooled equations whose per-unit nuisance values
// come from the fold that held the unit out; DML1 solves the same equations
// fold by fold and averages the stacked roots (the sandwich is evaluated
// pooled at the averaged point).

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dualframe/common.hpp"
#include "dualframe/dataset.hpp"
#include "dualframe/features.hpp"
#include "dualframe/inference.hpp"
#include "dualframe/kernel_ridge.hpp"
#include "dualframe/nuisance.hpp"
#include "dualframe/sampling_model.hpp"
#include "dualframe/scores.hpp"
#include "dualframe/solver.hpp"

namespace dualframe {

struct DmlConfig {
  std::string estimator = "eff";  // p | np | p_np | eff_union | subeff | eff
  int folds = 5;
  std::string variant = "dml2";  // dml1 | dml2 (baselines ignore both)
  std::uint64_t seed = 1;        // fold-split seed
};

struct EstimateOptions {
  DmlConfig dml;
  double alpha = 0.05;
  std::vector<std::string> model_features;  // empty -> (1, covariates..., y)
  std::vector<std::string> g_features;      // empty -> intercept/linear/square defaults
  std::string gtilde_variant = "mar";       // mar | linkage
  NuisanceOptions nuisance;
  SolverConfig solver;
  int max_refresh = 5;
  double refresh_tol = 1e-6;
  VectorXd phi_init;      // empty -> zero vector
  double clip_eps = 1e-3;
  // Force the fitted augmentations h4 and eta4 to zero inside the "eff"
  // path. "eff_union" is exactly this switch; exposing it directly lets the
  // equality be checked end to end.
  bool force_zero_augmentation = false;
};

struct EstimateReport {
  std::string estimator;
  VectorXd theta;
  VectorXd theta_se;
  std::vector<ConfInterval> theta_ci;
  bool has_phi = false;
  VectorXd phi;
  VectorXd phi_se;
  std::vector<ConfInterval> phi_ci;
  MatrixXd vcov;  // stacked (theta[, phi]) sandwich covariance

  bool converged = false;
  bool step2_accepted = true;  // efficient path: augmented root accepted
  bool used_pseudo_inverse = false;
  int refreshes = 0;
  int iterations = 0;
  double final_norm = kNaN;

  int pibar_clamp_count = 0;

  int n_total = 0, n_np = 0, n_p = 0, n_union = 0;
  double alpha = 0.05;

  std::vector<VectorXd> fold_roots;  // DML1 per-fold stacked roots
};

namespace detail {

template <typename Fn>
void for_each_row(int n_total, const std::vector<int>* rows, Fn&& fn) {
  if (rows) {
    for (int r : *rows) fn(r);
  } else {
    for (int r = 0; r < n_total; ++r) fn(r);
  }
}

inline double row_count(int n_total, const std::vector<int>* rows) {
  return static_cast<double>(rows ? static_cast<int>(rows->size()) : n_total);
}

inline VectorXd concat2(const VectorXd& a, const VectorXd& b) {
  VectorXd out(a.size() + b.size());
  out.head(a.size()) = a;
  out.tail(b.size()) = b;
  return out;
}

// Mean of the phi estimating function: lead - R eta4 (eta4 = 0 when null).
inline VectorXd eff_phi_value(const DualFrameDataset& ds, const LogisticSamplingModel& model, const VectorXd& pibar,
                              const MatrixXd* eta4, const std::vector<int>* rows) {
  const int dim = model.dim();
  KahanVec acc(dim);
  for_each_row(ds.n_total(), rows, [&](int r) {
    const UnitScoreEval e = build_unit_eval(model, pibar[r], ds.record(r));
    VectorXd s = lead_phi(e, dim);
    if (eta4) s.noalias() -= residual_r(e) * eta4->row(r).transpose();
    acc.add(s);
  });
  return acc.value() / row_count(ds.n_total(), rows);
}

inline MatrixXd eff_phi_jacobian(const DualFrameDataset& ds, const LogisticSamplingModel& model,
                                 const VectorXd& pibar, const MatrixXd* eta4, const std::vector<int>* rows) {
  const int dim = model.dim();
  MatrixXd acc = MatrixXd::Zero(dim, dim);
  for_each_row(ds.n_total(), rows, [&](int r) {
    const UnitScoreEval e = build_unit_eval(model, pibar[r], ds.record(r));
    acc += dlead_dphi(e, dim);
    if (eta4) acc.noalias() -= eta4->row(r).transpose() * dresidual_r_dphi(e, dim).transpose();
  });
  return acc / row_count(ds.n_total(), rows);
}

// Mean outer product of the unaugmented lead term (step-1 score), for the
// acceptance-radius sandwich.
inline MatrixXd lead_outer(const DualFrameDataset& ds, const LogisticSamplingModel& model, const VectorXd& pibar) {
  const int dim = model.dim();
  MatrixXd acc = MatrixXd::Zero(dim, dim);
  for (int r = 0; r < ds.n_total(); ++r) {
    const UnitScoreEval e = build_unit_eval(model, pibar[r], ds.record(r));
    const VectorXd s = lead_phi(e, dim);
    acc.noalias() += s * s.transpose();
  }
  return acc / static_cast<double>(ds.n_total());
}

// Exact solve of the affine theta equation
//   mean( c U(theta) + R h4(theta) ) = 0,
// where U(theta) = theta + u0 componentwise and h4(theta) = slope theta + r0.
inline VectorXd eff_theta_affine(const DualFrameDataset& ds, const LogisticSamplingModel& model,
                                 const VectorXd& pibar, const NuisanceValues* nv, const TargetFunction& target,
                                 const std::vector<int>* rows) {
  KahanSum coeff;
  KahanVec num(target.dim);
  VectorXd u0_buf;
  for_each_row(ds.n_total(), rows, [&](int r) {
    const UnitRecord rec = ds.record(r);
    const UnitScoreEval e = build_unit_eval(model, pibar[r], rec);
    const double c = c_eff_theta(e);
    const double R = residual_r(e);
    const double slope = nv ? nv->h4_slope[r] : 0.0;
    coeff.add(c + R * slope);
    VectorXd term = nv ? VectorXd(R * nv->h4_r0.row(r).transpose()) : VectorXd(VectorXd::Zero(target.dim));
    if (c != 0.0) {
      target.u0(rec, u0_buf);
      term.noalias() += c * u0_buf;
    }
    num.add(term);
  });
  return -num.value() / coeff.value();
}

struct StackedPack {
  VectorXd g;
  MatrixXd jac;
  MatrixXd omega;
};

// Stacked (theta, phi) efficient system at a point, with nuisance functions
// frozen: value, analytic Jacobian, and score outer products. The h4
// augmentation keeps its exact affine theta-dependence; eta4 enters only
// when use_eta (the phi block is otherwise the unaugmented lead).
inline StackedPack eff_stacked(const DualFrameDataset& ds, const LogisticSamplingModel& model,
                               const VectorXd& pibar, const NuisanceValues* nv, bool use_eta,
                               const TargetFunction& target, const VectorXd& theta, const std::vector<int>* rows,
                               bool want_jac, bool want_omega) {
  const int dim_t = target.dim;
  const int dim_p = model.dim();
  const int d = dim_t + dim_p;
  KahanVec g(d);
  MatrixXd jac = MatrixXd::Zero(d, d), omega = MatrixXd::Zero(d, d);
  KahanSum coeff;  // d theta-score / d theta (scalar times identity)
  VectorXd u_buf, stacked(d);
  for_each_row(ds.n_total(), rows, [&](int r) {
    const UnitRecord rec = ds.record(r);
    const UnitScoreEval e = build_unit_eval(model, pibar[r], rec);
    const double c = c_eff_theta(e);
    const double R = residual_r(e);
    const double slope = nv ? nv->h4_slope[r] : 0.0;
    const VectorXd h4 = nv ? VectorXd(nv->h4_at(r, theta)) : VectorXd(VectorXd::Zero(dim_t));
    const VectorXd* u = nullptr;
    if (c != 0.0) {
      target.evaluate(theta, rec, u_buf);
      u = &u_buf;
    }
    stacked.head(dim_t) = s_eff_theta_unit(e, u, h4);
    stacked.tail(dim_p) = use_eta ? VectorXd(s_eff_phi_unit(e, nv->eta4_at(r))) : VectorXd(lead_phi(e, dim_p));
    g.add(stacked);
    if (want_omega) omega.noalias() += stacked * stacked.transpose();
    if (want_jac) {
      coeff.add(c + R * slope);
      const VectorXd dR = dresidual_r_dphi(e, dim_p);
      const VectorXd dc = dc_eff_theta_dphi(e, dim_p);
      if (u != nullptr) jac.block(0, dim_t, dim_t, dim_p).noalias() += (*u) * dc.transpose();
      jac.block(0, dim_t, dim_t, dim_p).noalias() += h4 * dR.transpose();
      jac.block(dim_t, dim_t, dim_p, dim_p) += dlead_dphi(e, dim_p);
      if (use_eta) jac.block(dim_t, dim_t, dim_p, dim_p).noalias() -= nv->eta4_at(r) * dR.transpose();
    }
  });
  const double n = row_count(ds.n_total(), rows);
  StackedPack out;
  out.g = g.value() / n;
  if (want_jac) {
    jac /= n;
    jac.block(0, 0, dim_t, dim_t) = (coeff.value() / n) * MatrixXd::Identity(dim_t, dim_t);
    out.jac = std::move(jac);
  }
  if (want_omega) out.omega = omega / n;
  return out;
}

// Shared helper for the plain weighted theta equation mean(w U(theta)) = 0;
// exact for affine targets, damped Newton otherwise. Weights must be zero
// wherever the outcome is unobserved.
inline VectorXd weighted_theta_solve(const DualFrameDataset& ds, const TargetFunction& target,
                                     const VectorXd& weights, const std::vector<int>* rows,
                                     const SolverConfig& solver, bool* converged) {
  *converged = true;
  if (target.affine_unit_slope && target.u0) {
    KahanSum denom;
    KahanVec num(target.dim);
    VectorXd u0_buf;
    for_each_row(ds.n_total(), rows, [&](int r) {
      const double w = weights[r];
      if (w == 0.0) return;
      denom.add(w);
      target.u0(ds.record(r), u0_buf);
      num.add(w * u0_buf);
    });
    if (denom.value() == 0.0) throw FitError("weighted theta equation: all weights are zero");
    return -num.value() / denom.value();
  }
  VectorFn f = [&](const VectorXd& theta) {
    KahanVec acc(target.dim);
    VectorXd u_buf;
    for_each_row(ds.n_total(), rows, [&](int r) {
      const double w = weights[r];
      if (w == 0.0) return;
      target.evaluate(theta, ds.record(r), u_buf);
      acc.add(w * u_buf);
    });
    return VectorXd(acc.value() / row_count(ds.n_total(), rows));
  };
  const RootResult res = solve_root(f, VectorXd::Zero(target.dim), solver, nullptr);
  *converged = res.converged;
  return res.x;
}

// Mean Jacobian of the weighted theta equation: exact mean(w) * I for affine
// targets, central finite differences otherwise.
inline MatrixXd weighted_theta_jacobian(const DualFrameDataset& ds, const TargetFunction& target,
                                        const VectorXd& weights, const VectorXd& theta,
                                        const std::vector<int>* rows, const SolverConfig& solver) {
  if (target.affine_unit_slope) {
    KahanSum wsum;
    for_each_row(ds.n_total(), rows, [&](int r) { wsum.add(weights[r]); });
    return (wsum.value() / row_count(ds.n_total(), rows)) * MatrixXd::Identity(target.dim, target.dim);
  }
  VectorFn f = [&](const VectorXd& th) {
    KahanVec acc(target.dim);
    VectorXd u_buf;
    for_each_row(ds.n_total(), rows, [&](int r) {
      if (weights[r] == 0.0) return;
      target.evaluate(th, ds.record(r), u_buf);
      acc.add(weights[r] * u_buf);
    });
    return VectorXd(acc.value() / row_count(ds.n_total(), rows));
  };
  return fd_jacobian(f, theta, solver.fd_step_scale);
}

inline void fill_theta_block(EstimateReport& rep, const MatrixXd& cov, double alpha) {
  const int dim_t = static_cast<int>(rep.theta.size());
  rep.theta_se.resize(dim_t);
  rep.theta_ci.clear();
  for (int j = 0; j < dim_t; ++j) {
    rep.theta_se[j] = std::sqrt(std::max(cov(j, j), 0.0));
    rep.theta_ci.push_back(wald_interval(rep.theta[j], rep.theta_se[j], alpha));
  }
}

inline void fill_phi_block(EstimateReport& rep, const MatrixXd& cov, int dim_t, double alpha) {
  const int dim_p = static_cast<int>(rep.phi.size());
  rep.phi_se.resize(dim_p);
  rep.phi_ci.clear();
  for (int j = 0; j < dim_p; ++j) {
    rep.phi_se[j] = std::sqrt(std::max(cov(dim_t + j, dim_t + j), 0.0));
    rep.phi_ci.push_back(wald_interval(rep.phi[j], rep.phi_se[j], alpha));
  }
}

inline std::vector<std::string> default_model_tokens(const DualFrameDataset& ds) {
  std::vector<std::string> t{"1"};
  for (const std::string& name : ds.covariate_names) t.push_back(name);
  t.push_back("y");
  return t;
}

inline LogisticSamplingModel make_model(const DualFrameDataset& ds, const EstimateOptions& opts) {
  const std::vector<std::string> tokens =
      opts.model_features.empty() ? default_model_tokens(ds) : opts.model_features;
  const FeatureMap fm = FeatureMap::parse(tokens, ds.covariate_names);
  VectorXd phi0 = opts.phi_init;
  if (phi0.size() == 0) phi0 = VectorXd::Zero(fm.dim());
  if (phi0.size() != fm.dim())
    throw ArgumentError("phi_init has dimension " + std::to_string(phi0.size()) + ", model needs " +
                        std::to_string(fm.dim()));
  return LogisticSamplingModel(phi0, fm, opts.clip_eps);
}

// Calibration feature values g(X), one row per record (X-only by contract).
inline MatrixXd calibration_values(const DualFrameDataset& ds, const EstimateOptions& opts, int dim_phi) {
  const std::vector<std::string> tokens =
      opts.g_features.empty() ? default_g_tokens(ds.covariate_names, dim_phi) : opts.g_features;
  const FeatureMap gm = FeatureMap::parse(tokens, ds.covariate_names);
  require_x_only(gm, "calibration features");
  if (gm.dim() != dim_phi)
    throw ArgumentError("calibration features have dimension " + std::to_string(gm.dim()) +
                        " but the sampling model has " + std::to_string(dim_phi) + " parameters");
  MatrixXd g(ds.n_total(), dim_phi);
  VectorXd buf;
  for (int r = 0; r < ds.n_total(); ++r) {
    gm.evaluate(ds.record(r), buf);
    g.row(r) = buf.transpose();
  }
  return g;
}

inline void fill_counts(EstimateReport& rep, const DualFrameDataset& ds) {
  rep.n_total = ds.n_total();
  rep.n_np = ds.count_np();
  rep.n_p = ds.count_p();
  rep.n_union = ds.count_union();
}

}  // namespace detail

// The unaugmented (k = 0) identification equation as a 1/N-scaled function of
// phi, with pi_bar fixed — the object probed by the monotonicity diagnostic.
inline VectorFn identification_equation(const DualFrameDataset& ds, const LogisticSamplingModel& model,
                                        const VectorXd& pibar) {
  const DualFrameDataset* dsp = &ds;
  return [dsp, model, pibar](const VectorXd& phi) {
    return detail::eff_phi_value(*dsp, model.with_phi(phi), pibar, nullptr, nullptr);
  };
}

namespace detail {

// --------------------------------------------------------------------------
// Baseline estimators

inline EstimateReport estimate_p(const DualFrameDataset& ds, const EstimateOptions& opts,
                                 const TargetFunction& target) {
  EstimateReport rep;
  rep.estimator = "p";
  rep.alpha = opts.alpha;
  fill_counts(rep, ds);
  const int n = ds.n_total();
  VectorXd w = VectorXd::Zero(n);
  for (int r = 0; r < n; ++r)
    if (ds.delta_p[static_cast<size_t>(r)] == 1) w[r] = 1.0 / ds.pi_p[r];
  bool ok = true;
  rep.theta = weighted_theta_solve(ds, target, w, nullptr, opts.solver, &ok);
  rep.converged = ok;

  MatrixXd omega = MatrixXd::Zero(target.dim, target.dim);
  VectorXd u_buf;
  for (int r = 0; r < n; ++r) {
    if (w[r] == 0.0) continue;
    target.evaluate(rep.theta, ds.record(r), u_buf);
    const VectorXd s = w[r] * u_buf;
    omega.noalias() += s * s.transpose();
  }
  const MatrixXd jac = weighted_theta_jacobian(ds, target, w, rep.theta, nullptr, opts.solver);
  rep.vcov = sandwich_covariance(jac, omega / n, n);
  rep.final_norm = 0.0;
  detail::fill_theta_block(rep, rep.vcov, opts.alpha);
  return rep;
}

// Shared machinery for the two calibration baselines: solve the phi
// calibration equation, then the weighted theta equation, then the stacked
// block-triangular sandwich. `use_union` switches between the
// non-probability-only weights (d_np / pi_np) and union weights (d_u / pi_u).
inline EstimateReport estimate_calibrated(const DualFrameDataset& ds, const EstimateOptions& opts,
                                          const TargetFunction& target, bool use_union) {
  EstimateReport rep;
  rep.estimator = use_union ? "p_np" : "np";
  rep.alpha = opts.alpha;
  fill_counts(rep, ds);
  const int n = ds.n_total();
  const LogisticSamplingModel model = make_model(ds, opts);
  const int dim_p = model.dim();
  const int dim_t = target.dim;
  const MatrixXd g = calibration_values(ds, opts, dim_p);

  // Working pi_bar: global fit (these baselines have no fold structure).
  VectorXd pibar = VectorXd::Constant(n, 0.5);
  if (use_union) {
    const PiBarModel pb = fit_pi_bar(ds, krr_mean_learner(opts.nuisance.krr));
    for (int r = 0; r < n; ++r) pibar[r] = pb.predict(ds.x_row(r));
  }

  VectorFn eq = [&](const VectorXd& phi) {
    const LogisticSamplingModel m = model.with_phi(phi);
    KahanVec acc(dim_p);
    for (int r = 0; r < n; ++r) {
      const UnitScoreEval e = build_unit_eval(m, pibar[r], ds.record(r));
      const VectorXd gr = g.row(r).transpose();
      acc.add(use_union ? union_ee_unit(e, gr) : chang_kott_unit(e, gr));
    }
    return VectorXd(acc.value() / n);
  };
  JacobianFn jac_fn = [&](const VectorXd& phi) {
    const LogisticSamplingModel m = model.with_phi(phi);
    MatrixXd acc = MatrixXd::Zero(dim_p, dim_p);
    for (int r = 0; r < n; ++r) {
      const UnitScoreEval e = build_unit_eval(m, pibar[r], ds.record(r));
      if (!e.has_model) continue;
      const VectorXd gr = g.row(r).transpose();
      acc += use_union ? dunion_ee_dphi(e, gr) : dchang_kott_dphi(e, gr);
    }
    return MatrixXd(acc / n);
  };
  // Under a weakly identified design a single Newton start often stalls on a
  // plateau of the moment surface without reaching any of the sample roots
  // that do exist. Retry from a short deterministic ladder of seeded starts
  // and accept the first root found; identified designs converge on the
  // first attempt and never enter the ladder.
  RootResult phi_res = solve_root(eq, model.phi(), opts.solver, &jac_fn);
  if (!phi_res.converged) {
    Rng rng(splitmix64(opts.dml.seed ^ 0x43616c6962ull));
    for (int attempt = 0; attempt < 16 && !phi_res.converged; ++attempt) {
      VectorXd start(dim_p);
      for (int j = 0; j < dim_p; ++j) start[j] = 6.0 * rng.uniform() - 3.0;
      const RootResult retry = solve_root(eq, start, opts.solver, &jac_fn);
      if (retry.converged) phi_res = retry;
    }
  }
  rep.has_phi = true;
  rep.phi = phi_res.x;
  rep.iterations = phi_res.iterations;
  rep.final_norm = phi_res.g_norm;
  rep.used_pseudo_inverse = phi_res.used_pseudo_inverse;

  const LogisticSamplingModel m_hat = model.with_phi(phi_res.x);
  VectorXd w = VectorXd::Zero(n);
  for (int r = 0; r < n; ++r) {
    const UnitRecord rec = ds.record(r);
    if (use_union) {
      if (rec.in_union()) {
        const UnitScoreEval e = build_unit_eval(m_hat, pibar[r], rec);
        w[r] = 1.0 / e.pu;
      }
    } else if (rec.delta_np == 1) {
      w[r] = 1.0 / m_hat.pi_np(rec);
    }
  }
  bool theta_ok = true;
  rep.theta = weighted_theta_solve(ds, target, w, nullptr, opts.solver, &theta_ok);
  rep.converged = phi_res.converged && theta_ok;

  // Stacked sandwich: scores [w U; calibration term], block-triangular J.
  const int d = dim_t + dim_p;
  MatrixXd jac = MatrixXd::Zero(d, d), omega = MatrixXd::Zero(d, d);
  VectorXd u_buf, stacked(d);
  for (int r = 0; r < n; ++r) {
    const UnitRecord rec = ds.record(r);
    const UnitScoreEval e = build_unit_eval(m_hat, pibar[r], rec);
    const VectorXd gr = g.row(r).transpose();
    VectorXd s_theta = VectorXd::Zero(dim_t);
    if (w[r] != 0.0) {
      target.evaluate(rep.theta, rec, u_buf);
      s_theta = w[r] * u_buf;
      // d/dphi of (w U): w = d_np/s or d_u/pu.
      if (e.has_model && e.grad_scale != 0.0) {
        const VectorXd sd = e.grad_scale * e.v;
        if (use_union) {
          const VectorXd ud = (1.0 - e.pi_p_eff()) * sd;
          jac.block(0, dim_t, dim_t, dim_p).noalias() -= (w[r] * w[r]) * (u_buf * ud.transpose());
        } else {
          jac.block(0, dim_t, dim_t, dim_p).noalias() -= (w[r] * w[r]) * (u_buf * sd.transpose());
        }
      }
    }
    stacked.head(dim_t) = s_theta;
    stacked.tail(dim_p) = use_union ? union_ee_unit(e, gr) : chang_kott_unit(e, gr);
    omega.noalias() += stacked * stacked.transpose();
    if (e.has_model)
      jac.block(dim_t, dim_t, dim_p, dim_p) += use_union ? dunion_ee_dphi(e, gr) : dchang_kott_dphi(e, gr);
  }
  jac /= n;
  jac.block(0, 0, dim_t, dim_t) = weighted_theta_jacobian(ds, target, w, rep.theta, nullptr, opts.solver);
  rep.vcov = sandwich_covariance(jac, omega / n, n);
  fill_theta_block(rep, rep.vcov, opts.alpha);
  fill_phi_block(rep, rep.vcov, dim_t, opts.alpha);
  return rep;
}

// --------------------------------------------------------------------------
// Sub-efficient estimator

inline EstimateReport estimate_subeff(const DualFrameDataset& ds, const EstimateOptions& opts,
                                      const TargetFunction& target) {
  EstimateReport rep;
  rep.estimator = "subeff";
  rep.alpha = opts.alpha;
  fill_counts(rep, ds);
  if (!target.affine_unit_slope || !target.u0)
    throw ArgumentError("the sub-efficient estimator requires a target that is affine in theta");
  const int n = ds.n_total();
  const int dim_t = target.dim;
  const FoldPartition folds = split_folds(ds, opts.dml.folds, opts.dml.seed);
  CrossFitNuisances nuis(ds, folds, opts.nuisance);
  if (opts.gtilde_variant == "mar") {
    nuis.fit_gtilde_mar(target);
  } else if (opts.gtilde_variant == "linkage") {
    nuis.fit_gtilde_linkage(target);
  } else {
    throw ArgumentError("unknown gtilde variant '" + opts.gtilde_variant + "' (expected mar or linkage)");
  }
  const NuisanceValues& nv = nuis.values();
  rep.pibar_clamp_count = nv.pibar_clamp_count;

  // Per-unit theta-slope and intercept of the score:
  //   s = d_np U + (1-d_np){ a U + (1-a) gtilde },  a = d_p/pi_p.
  auto solve_rows = [&](const std::vector<int>* rows) {
    KahanSum denom;
    KahanVec num(dim_t);
    VectorXd u0_buf;
    for_each_row(n, rows, [&](int r) {
      const UnitRecord rec = ds.record(r);
      const double a = (rec.delta_p == 1) ? 1.0 / rec.pi_p : 0.0;
      const double u_weight = (rec.delta_np == 1) ? 1.0 : a;
      const double g_weight = (rec.delta_np == 1) ? 0.0 : 1.0 - a;
      denom.add(u_weight + g_weight * nv.gt_slope[r]);
      VectorXd term = g_weight * nv.gt_r0.row(r).transpose();
      if (u_weight != 0.0) {
        target.u0(rec, u0_buf);
        term.noalias() += u_weight * u0_buf;
      }
      num.add(term);
    });
    return VectorXd(-num.value() / denom.value());
  };

  if (opts.dml.variant == "dml1") {
    KahanVec acc(dim_t);
    for (int kf = 1; kf <= folds.k; ++kf) {
      const std::vector<int> rows = folds.indices_in(kf);
      const VectorXd root = solve_rows(&rows);
      rep.fold_roots.push_back(root);
      acc.add(root);
    }
    rep.theta = acc.value() / static_cast<double>(folds.k);
  } else {
    rep.theta = solve_rows(nullptr);
  }
  rep.converged = true;
  rep.final_norm = 0.0;

  KahanSum coeff;
  MatrixXd omega = MatrixXd::Zero(dim_t, dim_t);
  VectorXd u_buf;
  for (int r = 0; r < n; ++r) {
    const UnitRecord rec = ds.record(r);
    const VectorXd* u = nullptr;
    if (rec.delta_np == 1 || rec.delta_p == 1) {
      target.evaluate(rep.theta, rec, u_buf);
      u = &u_buf;
    }
    const VectorXd gt = nv.gtilde_at(r, rep.theta);
    const VectorXd s = s_subeff_unit(rec.delta_np, rec.delta_p, rec.pi_p, u, gt);
    omega.noalias() += s * s.transpose();
    const double a = (rec.delta_p == 1) ? 1.0 / rec.pi_p : 0.0;
    const double u_weight = (rec.delta_np == 1) ? 1.0 : a;
    const double g_weight = (rec.delta_np == 1) ? 0.0 : 1.0 - a;
    coeff.add(u_weight + g_weight * nv.gt_slope[r]);
  }
  const MatrixXd jac = (coeff.value() / n) * MatrixXd::Identity(dim_t, dim_t);
  rep.vcov = sandwich_covariance(jac, omega / n, n);
  fill_theta_block(rep, rep.vcov, opts.alpha);
  return rep;
}

// --------------------------------------------------------------------------
// Efficient estimator (and its zero-augmentation special case)

inline EstimateReport estimate_eff(const DualFrameDataset& ds, const EstimateOptions& opts,
                                   const TargetFunction& target, bool zero_aug) {
  EstimateReport rep;
  rep.estimator = zero_aug ? "eff_union" : "eff";
  rep.alpha = opts.alpha;
  fill_counts(rep, ds);
  const int n = ds.n_total();
  const int dim_t = target.dim;
  if (!target.affine_unit_slope || !target.u0)
    throw ArgumentError("the efficient estimator requires a target that is affine in theta");

  const LogisticSamplingModel model = make_model(ds, opts);
  const int dim_p = model.dim();
  const FoldPartition folds = split_folds(ds, opts.dml.folds, opts.dml.seed);
  CrossFitNuisances nuis(ds, folds, opts.nuisance);
  const VectorXd& pibar = nuis.values().pibar;

  VectorFn eq0 = [&](const VectorXd& phi) {
    return eff_phi_value(ds, model.with_phi(phi), pibar, nullptr, nullptr);
  };
  JacobianFn jac0 = [&](const VectorXd& phi) {
    return eff_phi_jacobian(ds, model.with_phi(phi), pibar, nullptr, nullptr);
  };

  // Step-1 start: the configured start first; if the unaugmented equation
  // does not converge from there, fall back to the cheap calibration fit as
  // a consistent warm start.
  VectorXd x0 = model.phi();
  {
    const RootResult probe = solve_root(eq0, x0, opts.solver, &jac0);
    if (probe.converged) {
      x0 = probe.x;
    } else {
      try {
        const MatrixXd g = calibration_values(ds, opts, dim_p);
        VectorFn ck_eq = [&](const VectorXd& phi) {
          const LogisticSamplingModel m = model.with_phi(phi);
          KahanVec acc(dim_p);
          for (int r = 0; r < n; ++r)
            acc.add(chang_kott_unit(build_unit_eval(m, pibar[r], ds.record(r)), g.row(r).transpose()));
          return VectorXd(acc.value() / n);
        };
        const RootResult ck = solve_root(ck_eq, model.phi(), opts.solver, nullptr);
        if (ck.converged) {
          const RootResult probe2 = solve_root(eq0, ck.x, opts.solver, &jac0);
          if (probe2.converged) x0 = probe2.x;
        }
      } catch (const Error&) {
        // No usable fallback start; step 1 below reports the failure.
      }
    }
  }

  TwoStepResult ts;
  bool use_eta = false;
  if (zero_aug) {
    ts.step1 = solve_root(eq0, x0, opts.solver, &jac0);
    ts.phi = ts.step1.x;
    ts.step2_accepted = true;
  } else {
    TwoStepOptions tso;
    tso.solver = opts.solver;
    tso.max_refresh = opts.max_refresh;
    tso.refresh_tol = opts.refresh_tol;
    AugmentedEquationFactory make_aug = [&](const VectorXd& phi_cur) -> std::pair<VectorFn, JacobianFn> {
      nuis.refit_model_nuisances(model.with_phi(phi_cur), target);
      auto eta = std::make_shared<const MatrixXd>(nuis.values().eta4);
      VectorFn eq = [&ds, &model, &pibar, eta](const VectorXd& phi) {
        return eff_phi_value(ds, model.with_phi(phi), pibar, eta.get(), nullptr);
      };
      JacobianFn jc = [&ds, &model, &pibar, eta](const VectorXd& phi) {
        return eff_phi_jacobian(ds, model.with_phi(phi), pibar, eta.get(), nullptr);
      };
      return {std::move(eq), std::move(jc)};
    };
    AcceptanceRadiusFn radius = [&](const RootResult& s1) {
      const MatrixXd omega = lead_outer(ds, model.with_phi(s1.x), pibar);
      const MatrixXd cov = sandwich_covariance(s1.jacobian, omega, n);
      return VectorXd(2.0 * cov.diagonal().cwiseMax(0.0).cwiseSqrt());
    };
    ts = solve_phi_two_step(eq0, &jac0, x0, make_aug, radius, tso);
    use_eta = ts.step2_accepted;
  }
  rep.refreshes = ts.refreshes;
  rep.step2_accepted = ts.step2_accepted;
  rep.has_phi = true;
  rep.phi = ts.phi;
  rep.iterations = ts.step1.iterations + (ts.step2_attempted ? ts.step2.iterations : 0);
  rep.used_pseudo_inverse = ts.step1.used_pseudo_inverse || ts.step2.used_pseudo_inverse;
  if (!ts.step1.converged) {
    // Preliminary equation failed: no usable phi, report diagnostics only.
    rep.converged = false;
    rep.final_norm = ts.step1.g_norm;
    rep.theta = VectorXd::Constant(dim_t, kNaN);
    rep.theta_se = VectorXd::Constant(dim_t, kNaN);
    rep.phi_se = VectorXd::Constant(dim_p, kNaN);
    return rep;
  }

  const NuisanceValues* nv = nullptr;
  if (!zero_aug) {
    // Re-fit at the accepted phi so theta-solve, polish, and sandwich all use
    // nuisances evaluated at the reported estimate.
    nuis.refit_model_nuisances(model.with_phi(ts.phi), target);
    nv = &nuis.values();
  }
  rep.pibar_clamp_count = nuis.values().pibar_clamp_count;

  VectorXd theta_hat = eff_theta_affine(ds, model.with_phi(ts.phi), pibar, nv, target, nullptr);

  // Full-Newton polish of the stacked system with frozen nuisance functions.
  auto stacked_fn = [&](const VectorXd& x, const std::vector<int>* rows, bool want_jac, bool want_omega) {
    const VectorXd theta = x.head(dim_t);
    const LogisticSamplingModel m = model.with_phi(x.tail(dim_p));
    return eff_stacked(ds, m, pibar, nv, use_eta, target, theta, rows, want_jac, want_omega);
  };
  VectorFn f_all = [&](const VectorXd& x) { return stacked_fn(x, nullptr, false, false).g; };
  JacobianFn j_all = [&](const VectorXd& x) { return stacked_fn(x, nullptr, true, false).jac; };
  const RootResult polish = solve_root(f_all, concat2(theta_hat, ts.phi), opts.solver, &j_all);
  rep.iterations += polish.iterations;
  rep.used_pseudo_inverse = rep.used_pseudo_inverse || polish.used_pseudo_inverse;
  VectorXd point = polish.x;
  bool converged = polish.converged;

  if (opts.dml.variant == "dml1") {
    KahanVec acc(dim_t + dim_p);
    int ok_folds = 0;
    for (int kf = 1; kf <= folds.k; ++kf) {
      const std::vector<int> rows = folds.indices_in(kf);
      VectorFn f_k = [&](const VectorXd& x) { return stacked_fn(x, &rows, false, false).g; };
      JacobianFn j_k = [&](const VectorXd& x) { return stacked_fn(x, &rows, true, false).jac; };
      const RootResult res = solve_root(f_k, point, opts.solver, &j_k);
      rep.fold_roots.push_back(res.x);
      if (res.converged) {
        acc.add(res.x);
        ++ok_folds;
      }
    }
    if (ok_folds == folds.k) {
      point = acc.value() / static_cast<double>(folds.k);
    } else if (ok_folds > 0) {
      point = acc.value() / static_cast<double>(ok_folds);
      converged = false;
    } else {
      converged = false;
    }
  }

  const StackedPack fin = stacked_fn(point, nullptr, true, true);
  rep.theta = point.head(dim_t);
  rep.phi = point.tail(dim_p);
  rep.final_norm = fin.g.lpNorm<Eigen::Infinity>();
  rep.converged = converged && ts.step1.converged;
  rep.vcov = sandwich_covariance(fin.jac, fin.omega, n);
  fill_theta_block(rep, rep.vcov, opts.alpha);
  fill_phi_block(rep, rep.vcov, dim_t, opts.alpha);
  return rep;
}

}  // namespace detail

inline EstimateReport estimate(const DualFrameDataset& ds, const EstimateOptions& opts,
                               const TargetFunction& target = TargetFunction::mean()) {
  const std::string& kind = opts.dml.estimator;
  if (kind == "p") return detail::estimate_p(ds, opts, target);
  if (kind == "np") return detail::estimate_calibrated(ds, opts, target, /*use_union=*/false);
  if (kind == "p_np") return detail::estimate_calibrated(ds, opts, target, /*use_union=*/true);
  if (kind == "subeff") return detail::estimate_subeff(ds, opts, target);
  if (kind == "eff") return detail::estimate_eff(ds, opts, target, opts.force_zero_augmentation);
  if (kind == "eff_union") return detail::estimate_eff(ds, opts, target, /*zero_aug=*/true);
  throw ArgumentError("unknown estimator '" + kind + "' (expected p, np, p_np, subeff, eff_union, or eff)");
}

}  // namespace dualframe
