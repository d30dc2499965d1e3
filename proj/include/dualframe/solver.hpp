#pragma once

// Damped Newton root finder for stacked estimating equations, with an
// optional analytic Jacobian, a central-difference fallback, and a
// pseudo-inverse escape hatch for near-singular Jacobians. Also hosts the
// local-monotonicity diagnostic used to flag weakly identified sampling
// models before estimation.

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dualframe/common.hpp"
#include "dualframe/rng.hpp"

namespace dualframe {

using VectorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

struct SolverConfig {
  int max_iter = 100;
  double tol = 1e-8;  // convergence: ||g||_inf below this
  int max_halvings = 30;
  double fd_step_scale = 1e-5;  // central-difference step: scale * (1 + |x_j|)
  // Per-iteration cap on ||step||_inf (0 disables). Logistic estimating
  // equations flatten once probabilities clip, so an uncapped first Newton
  // step from a far-off start can overshoot into the plateau and strand the
  // line search near a spurious root at infinity.
  double max_step = 2.0;
};

struct RootResult {
  Eigen::VectorXd x;
  Eigen::VectorXd g;          // residual at x
  Eigen::MatrixXd jacobian;   // Jacobian at x (analytic if provided, else FD)
  int iterations = 0;
  bool converged = false;
  bool used_pseudo_inverse = false;
  double g_norm = std::numeric_limits<double>::infinity();
};

inline Eigen::MatrixXd fd_jacobian(const VectorFn& f, const Eigen::VectorXd& x, double step_scale = 1e-5) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd probe = f(x);
  Eigen::MatrixXd jac(probe.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = step_scale * (1.0 + std::abs(x[j]));
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    jac.col(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return jac;
}

namespace detail {

inline Eigen::VectorXd newton_direction(const Eigen::MatrixXd& jac, const Eigen::VectorXd& g,
                                        bool* used_pseudo_inverse) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
  // PartialPivLU requires a square matrix; our systems always are.
  const double rcond_proxy = std::abs(lu.determinant());
  Eigen::VectorXd d = lu.solve(-g);
  if (rcond_proxy > 1e-300 && d.allFinite()) return d;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jac);
  *used_pseudo_inverse = true;
  d = cod.solve(-g);
  if (!d.allFinite()) throw NumericError("newton_direction: non-finite step from singular Jacobian");
  return d;
}

}  // namespace detail

inline RootResult solve_root(const VectorFn& f, Eigen::VectorXd x0, const SolverConfig& cfg = {},
                             const JacobianFn* analytic_jac = nullptr) {
  RootResult res;
  res.x = std::move(x0);
  res.g = f(res.x);
  if (!res.g.allFinite()) throw NumericError("solve_root: estimating function non-finite at start");
  res.g_norm = res.g.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < cfg.max_iter; ++it) {
    if (res.g_norm < cfg.tol) {
      res.converged = true;
      break;
    }
    res.jacobian = analytic_jac ? (*analytic_jac)(res.x) : fd_jacobian(f, res.x, cfg.fd_step_scale);
    if (!res.jacobian.allFinite()) throw NumericError("solve_root: non-finite Jacobian");
    Eigen::VectorXd dir = detail::newton_direction(res.jacobian, res.g, &res.used_pseudo_inverse);
    if (cfg.max_step > 0.0) {
      const double len = dir.lpNorm<Eigen::Infinity>();
      if (len > cfg.max_step) dir *= cfg.max_step / len;
    }
    double step = 1.0;
    Eigen::VectorXd x_try, g_try;
    double norm_try = std::numeric_limits<double>::infinity();
    bool improved = false;
    for (int h = 0; h <= cfg.max_halvings; ++h) {
      x_try = res.x + step * dir;
      g_try = f(x_try);
      norm_try = g_try.allFinite() ? g_try.lpNorm<Eigen::Infinity>()
                                   : std::numeric_limits<double>::infinity();
      if (norm_try < res.g_norm) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    ++res.iterations;
    if (!improved) {
      // No descent even at the smallest step: take it anyway if finite so a
      // flat patch can be crossed, otherwise stop where we are.
      if (!g_try.allFinite()) break;
    }
    res.x = x_try;
    res.g = g_try;
    res.g_norm = norm_try;
    if (!improved && res.g_norm >= cfg.tol) break;
  }
  if (res.g_norm < cfg.tol) res.converged = true;
  if (res.jacobian.size() == 0)
    res.jacobian = analytic_jac ? (*analytic_jac)(res.x) : fd_jacobian(f, res.x, cfg.fd_step_scale);
  return res;
}

// Two-step phi procedure: step 1 solves the unaugmented (k = 0) equation
// from x0; step 2 re-solves with the fitted optimal augmentation, refreshed
// at the current phi up to max_refresh times, starting each solve from the
// latest accepted point. The augmented equation can have spurious far-away
// roots under a misspecified model, so the step-2 result is kept only when it
// lies within a componentwise acceptance radius of the step-1 root (the root
// closest to the preliminary estimate); otherwise the step-1 root is
// returned with step2_accepted = false.
struct TwoStepOptions {
  SolverConfig solver;
  int max_refresh = 5;        // nuisance refreshes of the augmented equation
  double refresh_tol = 1e-6;  // stop refreshing once phi moves less than this
};

struct TwoStepResult {
  RootResult step1;
  RootResult step2;  // last augmented solve; meaningful when step2_attempted
  Eigen::VectorXd phi;
  bool step2_attempted = false;
  bool step2_accepted = false;
  int refreshes = 0;
};

// make_augmented(phi) refits phi-dependent nuisances at phi and returns the
// augmented equation (and its analytic Jacobian; an empty function falls back
// to finite differences). acceptance_radius(step1) gives the componentwise
// radius; an empty vector disables the check.
using AugmentedEquationFactory = std::function<std::pair<VectorFn, JacobianFn>(const Eigen::VectorXd&)>;
using AcceptanceRadiusFn = std::function<Eigen::VectorXd(const RootResult&)>;

inline TwoStepResult solve_phi_two_step(const VectorFn& eq_k0, const JacobianFn* jac_k0,
                                        const Eigen::VectorXd& x0, const AugmentedEquationFactory& make_augmented,
                                        const AcceptanceRadiusFn& acceptance_radius, const TwoStepOptions& opts) {
  TwoStepResult out;
  out.step1 = solve_root(eq_k0, x0, opts.solver, jac_k0);
  out.phi = out.step1.x;
  if (!out.step1.converged) return out;  // step 2 not attempted

  Eigen::VectorXd radius;
  if (acceptance_radius) radius = acceptance_radius(out.step1);

  Eigen::VectorXd phi_cur = out.step1.x;
  bool all_converged = true;
  for (int r = 0; r < std::max(1, opts.max_refresh); ++r) {
    auto [eq_aug, jac_aug] = make_augmented(phi_cur);
    const RootResult res = jac_aug ? solve_root(eq_aug, phi_cur, opts.solver, &jac_aug)
                                   : solve_root(eq_aug, phi_cur, opts.solver, nullptr);
    out.step2 = res;
    out.step2_attempted = true;
    ++out.refreshes;
    if (!res.converged) {
      all_converged = false;
      break;
    }
    const double moved = (res.x - phi_cur).lpNorm<Eigen::Infinity>();
    phi_cur = res.x;
    if (moved < opts.refresh_tol) break;
  }
  bool within = all_converged;
  if (within && radius.size() > 0)
    for (Eigen::Index j = 0; j < phi_cur.size(); ++j)
      if (std::abs(phi_cur[j] - out.step1.x[j]) > radius[j]) within = false;
  if (within) {
    out.phi = phi_cur;
    out.step2_accepted = true;
  }
  return out;
}

// Local-monotonicity diagnostic. The identification argument needs the
// (k = 0) population equation to be strictly monotone in phi near the truth:
// the symmetrized Jacobian should be negative definite over a neighborhood.
// Each probe point gets the largest eigenvalue of the symmetrized FD
// Jacobian; PASS requires every one to be strictly negative (below a
// scale-relative zero band, so exact rank deficiency cannot sneak through as
// round-off noise).
struct MonotonicityReport {
  bool pass = false;
  double worst_max_eigenvalue = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> max_eigenvalues;  // one per probe point; NaN on failure
  std::vector<std::string> notes;       // per-point evaluation failures
};

inline MonotonicityReport monotonicity_diagnostic(const VectorFn& equation,
                                                  const std::vector<Eigen::VectorXd>& phi_points,
                                                  double fd_step_scale = 1e-5) {
  if (phi_points.empty()) throw ArgumentError("monotonicity_diagnostic: need at least one probe point");
  MonotonicityReport rep;
  rep.max_eigenvalues.reserve(phi_points.size());
  rep.pass = true;
  rep.worst_max_eigenvalue = -std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd& phi : phi_points) {
    try {
      Eigen::MatrixXd jac = fd_jacobian(equation, phi, fd_step_scale);
      if (!jac.allFinite()) throw NumericError("non-finite Jacobian");
      Eigen::MatrixXd sym = 0.5 * (jac + jac.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
      const double max_eig = eig.eigenvalues().maxCoeff();
      const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
      rep.max_eigenvalues.push_back(max_eig);
      rep.worst_max_eigenvalue = std::max(rep.worst_max_eigenvalue, max_eig);
      if (!(max_eig < -1e-9 * scale)) rep.pass = false;
    } catch (const Error& err) {
      rep.max_eigenvalues.push_back(std::numeric_limits<double>::quiet_NaN());
      rep.notes.push_back(err.what());
      rep.pass = false;
    }
  }
  return rep;
}

inline MonotonicityReport monotonicity_diagnostic(const VectorFn& equation, const Eigen::VectorXd& center,
                                                  double radius, int draws, std::uint64_t seed,
                                                  double fd_step_scale = 1e-5) {
  if (draws < 1) throw ArgumentError("monotonicity_diagnostic: draws must be >= 1");
  if (radius < 0.0) throw ArgumentError("monotonicity_diagnostic: radius must be >= 0");
  Rng rng(seed);
  std::vector<Eigen::VectorXd> points;
  points.reserve(static_cast<size_t>(draws));
  for (int d = 0; d < draws; ++d) {
    Eigen::VectorXd phi = center;
    for (Eigen::Index j = 0; j < phi.size(); ++j) phi[j] += radius * (2.0 * rng.uniform() - 1.0);
    points.push_back(std::move(phi));
  }
  return monotonicity_diagnostic(equation, points, fd_step_scale);
}

}  // namespace dualframe
