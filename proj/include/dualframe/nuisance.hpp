#pragma once

// Cross-fitted nuisance functions for the efficient and sub-efficient
// scores. Every conditional expectation given X is estimated by kernel ridge
// regression on out-of-fold rows and evaluated on the held-out fold.
//
// All regressions ride on union rows (outcome observed there). The odds-type
// conditional moments behind the fitted augmentations are ratios
//     h4(x)   = E[ U   O_u | X ] / E[ O_u | X ],   O_u = (1 - pi_u)/pi_u,
//     eta4(x) = E[ (1 - pi_p) sdot / pi_u | X ] / E[ O_u | X ],
// and each such ratio is computed as a single weight-in-the-loss kernel ridge
// regression over union rows: with weights w = (1 - pi_u)/pi_u^2,
//     E[ w z | X, delta_u = 1 ] / E[ w | X, delta_u = 1 ] = E[ O_u z | X ] / E[ O_u | X ]
// for any z(L), so the weighted fit of the bounded response z estimates the
// ratio directly. (Fitting numerator and denominator separately and dividing
// estimates the same object, but the denominator fit lives on the unbounded
// w-scale and crosses zero in sparse regions, which leaves the ratio
// unidentified there; the weighted form is bounded by the response range by
// construction.) The responses are z = u0 for h4 and z = sdot/(1 - s) for
// eta4, since (1 - pi_p_eff)/(1 - pi_u) = 1/(1 - s) exactly. The linkage form
// of gtilde is the same construction with weights
// w01 = (1-d_np) d_p (1 - pi_p)/pi_p^2, and the default missing-at-random
// form regresses the target residual directly, unweighted.
//
// The target U(theta) enters fitted augmentations affinely (identity slope
// per component), and a ridge fit is linear in its response at fixed lambda,
// so fit(U(theta)) = theta * fit(1) + fit(u0) exactly when the three fits
// share one penalty. Each augmentation is therefore stored as a per-unit
// (slope, intercept) pair covering the whole theta-path: estimating-equation
// solves in theta are exact affine solves, no iteration and no refitting.
// The penalty is chosen by GCV on the u0 response and shared by the slope
// and eta4 fits of the same refresh.
//
// The one-time eigendecomposition per (fold, cell) is shared by every fit
// here, and cross-kernels to the held-out rows are cached at construction;
// a refresh under a new phi only re-projects new targets.

#include <memory>
#include <string>
#include <vector>

#include "dualframe/common.hpp"
#include "dualframe/dataset.hpp"
#include "dualframe/kernel_ridge.hpp"
#include "dualframe/sampling_model.hpp"
#include "dualframe/scores.hpp"

namespace dualframe {

// Columns whose observed values are exactly {0,1} (both present) — used to
// split kernel regressions into category cells.
inline std::vector<int> detect_binary_columns(const XMatrix& x) {
  std::vector<int> cols;
  for (int j = 0; j < x.cols(); ++j) {
    bool binary = true, saw0 = false, saw1 = false;
    for (int i = 0; i < x.rows(); ++i) {
      const double v = x(i, j);
      if (v == 0.0)
        saw0 = true;
      else if (v == 1.0)
        saw1 = true;
      else {
        binary = false;
        break;
      }
    }
    if (binary && saw0 && saw1) cols.push_back(j);
  }
  return cols;
}

struct NuisanceOptions {
  KrrOptions krr;
  std::vector<int> binary_cols;  // used when auto_detect_binary is false
  bool auto_detect_binary = true;
};

struct NuisanceValues {
  // Cross-fitted working probability pi_bar_p(X), one value per record.
  VectorXd pibar;
  // eta4(X), per record x per phi-component.
  MatrixXd eta4;
  // h4(X; theta) = h4_slope * theta + h4_r0 componentwise.
  VectorXd h4_slope;
  MatrixXd h4_r0;
  // gtilde(X; theta) = gt_slope * theta + gt_r0 componentwise.
  VectorXd gt_slope;
  MatrixXd gt_r0;

  int pibar_clamp_count = 0;  // 1/pi_p predictions clamped up to 1

  VectorXd h4_at(int row, const VectorXd& theta) const {
    return h4_slope[row] * theta + h4_r0.row(row).transpose();
  }
  VectorXd gtilde_at(int row, const VectorXd& theta) const {
    return gt_slope[row] * theta + gt_r0.row(row).transpose();
  }
  VectorXd eta4_at(int row) const { return eta4.row(row).transpose(); }
};

namespace detail {

inline XMatrix submatrix_rows(const XMatrix& x, const std::vector<int>& rows) {
  XMatrix out(static_cast<int>(rows.size()), x.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<int>(i)) = x.row(rows[i]);
  return out;
}

}  // namespace detail

class CrossFitNuisances {
 public:
  CrossFitNuisances(const DualFrameDataset& ds, const FoldPartition& folds, NuisanceOptions opts = {})
      : ds_(&ds), opts_(std::move(opts)) {
    if (static_cast<int>(folds.assignments.size()) != ds.n_total())
      throw ArgumentError("fold partition does not match dataset size");
    if (opts_.auto_detect_binary) opts_.binary_cols = detect_binary_columns(ds.x);
    const int n = ds.n_total();
    vals_.pibar = VectorXd::Constant(n, kNaN);

    folds_.reserve(static_cast<size_t>(folds.k));
    for (int kf = 1; kf <= folds.k; ++kf) {
      Fold f;
      f.predict_rows = folds.indices_in(kf);
      for (int r : folds.indices_not_in(kf))
        if (ds.record(r).in_union()) f.train_rows.push_back(r);
      if (f.train_rows.size() < 2)
        throw FitError("fold " + std::to_string(kf) + ": fewer than 2 out-of-fold union rows");
      f.ws = std::make_unique<GroupedWorkspace>(detail::submatrix_rows(ds.x, f.train_rows), opts_.binary_cols,
                                                opts_.krr);
      f.cross = f.ws->cross(detail::submatrix_rows(ds.x, f.predict_rows));
      folds_.push_back(std::move(f));
    }

    // Working probability pi_bar_p: regress 1/pi_p on X over out-of-fold
    // probability-sample rows, clamp predictions to [1, inf), invert.
    for (int kf = 1; kf <= folds.k; ++kf) {
      Fold& f = folds_[static_cast<size_t>(kf - 1)];
      std::vector<int> p_rows;
      for (int r : folds.indices_not_in(kf))
        if (ds.record(r).delta_p == 1) p_rows.push_back(r);
      if (p_rows.size() < 2)
        throw FitError("fold " + std::to_string(kf) + ": fewer than 2 out-of-fold probability rows");
      GroupedWorkspace pws(detail::submatrix_rows(ds.x, p_rows), opts_.binary_cols, opts_.krr);
      VectorXd inv_pi(static_cast<int>(p_rows.size()));
      for (size_t i = 0; i < p_rows.size(); ++i) inv_pi[static_cast<int>(i)] = 1.0 / ds.pi_p[p_rows[i]];
      const GroupedWorkspace::GroupedFit fit = pws.fit(inv_pi);
      const GroupedWorkspace::CrossContext ctx = pws.cross(detail::submatrix_rows(ds.x, f.predict_rows));
      const VectorXd pred = pws.predict(ctx, fit);
      for (size_t i = 0; i < f.predict_rows.size(); ++i) {
        const double p = pred[static_cast<int>(i)];
        if (p < 1.0) ++vals_.pibar_clamp_count;
        vals_.pibar[f.predict_rows[i]] = 1.0 / std::max(p, 1.0);
      }
    }
  }

  const NuisanceValues& values() const { return vals_; }
  const std::vector<int>& binary_cols() const { return opts_.binary_cols; }

  // Refit eta4 and the affine representation of h4 under the current phi.
  // The union-odds weights change with phi, so each fold factors one weighted
  // system per refresh and fits every response under it: a GCV fit of the
  // theta-free response u0 picks the penalty, then the constant-1 response
  // (the theta-slope of h4) and the eta4 responses s*V reuse it.
  void refit_model_nuisances(const LogisticSamplingModel& model, const TargetFunction& target) {
    require_affine(target, "h4");
    const int n = ds_->n_total();
    const int dim_phi = model.dim();
    const int dim_theta = target.dim;
    vals_.eta4.setConstant(n, dim_phi, kNaN);
    vals_.h4_slope.setConstant(n, kNaN);
    vals_.h4_r0.setConstant(n, dim_theta, kNaN);

    VectorXd u0_buf;
    for (Fold& f : folds_) {
      const int nt = static_cast<int>(f.train_rows.size());
      VectorXd w(nt);
      MatrixXd eta_t(nt, dim_phi), u0(nt, dim_theta);
      for (int i = 0; i < nt; ++i) {
        const UnitRecord rec = ds_->record(f.train_rows[static_cast<size_t>(i)]);
        const UnitScoreEval e = build_unit_eval(model, vals_.pibar[f.train_rows[static_cast<size_t>(i)]], rec);
        w[i] = (1.0 - e.pu) / (e.pu * e.pu);
        eta_t.row(i) = (e.grad_scale / (1.0 - e.s)) * e.v.transpose();
        target.u0(rec, u0_buf);
        u0.row(i) = u0_buf.transpose();
      }
      const GroupedWorkspace::WeightedSystem sys = f.ws->weighted(w);
      if (sys.n_positive < 2) {
        // Degenerate odds: all union probabilities at 1 make the residual
        // score vanish, so the augmentation is irrelevant; use zero.
        for (int row : f.predict_rows) {
          vals_.h4_slope[row] = 0.0;
          vals_.eta4.row(row).setZero();
          vals_.h4_r0.row(row).setZero();
        }
        continue;
      }
      const GroupedWorkspace::GroupedFit r0_fit = f.ws->fit_weighted(sys, u0.col(0));
      MatrixXd eta_pred(f.cross.n_pred, dim_phi), r0_pred(f.cross.n_pred, dim_theta);
      r0_pred.col(0) = f.ws->predict(f.cross, r0_fit);
      for (int j = 1; j < dim_theta; ++j)
        r0_pred.col(j) = f.ws->predict(f.cross, f.ws->fit_weighted_like(sys, u0.col(j), r0_fit));
      for (int j = 0; j < dim_phi; ++j)
        eta_pred.col(j) = f.ws->predict(f.cross, f.ws->fit_weighted_like(sys, eta_t.col(j), r0_fit));
      const VectorXd slope_pred =
          f.ws->predict(f.cross, f.ws->fit_weighted_like(sys, VectorXd::Ones(nt), r0_fit));
      for (size_t i = 0; i < f.predict_rows.size(); ++i) {
        const int row = f.predict_rows[i];
        vals_.h4_slope[row] = slope_pred[static_cast<int>(i)];
        vals_.eta4.row(row) = eta_pred.row(static_cast<int>(i));
        vals_.h4_r0.row(row) = r0_pred.row(static_cast<int>(i));
      }
    }
  }

  // Default gtilde: regress the theta-free part of the target on X over union
  // rows (missing-at-random form), gtitle(x; theta) = theta + fit(u0)(x).
  void fit_gtilde_mar(const TargetFunction& target) {
    require_affine(target, "gtilde");
    const int n = ds_->n_total();
    const int dim_theta = target.dim;
    vals_.gt_slope = VectorXd::Ones(n);
    vals_.gt_r0.setConstant(n, dim_theta, kNaN);
    VectorXd u0_buf;
    for (Fold& f : folds_) {
      const int nt = static_cast<int>(f.train_rows.size());
      MatrixXd u0(nt, dim_theta);
      for (int i = 0; i < nt; ++i) {
        target.u0(ds_->record(f.train_rows[static_cast<size_t>(i)]), u0_buf);
        u0.row(i) = u0_buf.transpose();
      }
      for (int j = 0; j < dim_theta; ++j) {
        const VectorXd pred = f.ws->predict(f.cross, f.ws->fit(u0.col(j)));
        for (size_t i = 0; i < f.predict_rows.size(); ++i)
          vals_.gt_r0(f.predict_rows[i], j) = pred[static_cast<int>(i)];
      }
    }
  }

  // Linkage-free gtilde: the conditional moment weighted by (1-pi_np) O_p is
  // estimated from probability-only rows, as the weighted fit of u0 under
  // w01 = (1-d_np) d_p (1-pi_p)/pi_p^2 (zero weight off that subsample).
  void fit_gtilde_linkage(const TargetFunction& target) {
    require_affine(target, "gtilde");
    const int n = ds_->n_total();
    const int dim_theta = target.dim;
    vals_.gt_slope.setConstant(n, kNaN);
    vals_.gt_r0.setConstant(n, dim_theta, kNaN);
    VectorXd u0_buf;
    for (Fold& f : folds_) {
      const int nt = static_cast<int>(f.train_rows.size());
      VectorXd w01(nt);
      MatrixXd u0(nt, dim_theta);
      int n_active = 0;
      for (int i = 0; i < nt; ++i) {
        const UnitRecord rec = ds_->record(f.train_rows[static_cast<size_t>(i)]);
        const bool active = rec.delta_np == 0 && rec.delta_p == 1;
        w01[i] = active ? (1.0 - rec.pi_p) / (rec.pi_p * rec.pi_p) : 0.0;
        if (active) ++n_active;
        target.u0(rec, u0_buf);
        u0.row(i) = u0_buf.transpose();
      }
      if (n_active < 2)
        throw FitError("gtilde linkage: fewer than 2 out-of-fold probability-only records");
      const GroupedWorkspace::WeightedSystem sys = f.ws->weighted(w01);
      const GroupedWorkspace::GroupedFit r0_fit = f.ws->fit_weighted(sys, u0.col(0));
      MatrixXd r0_pred(f.cross.n_pred, dim_theta);
      r0_pred.col(0) = f.ws->predict(f.cross, r0_fit);
      for (int j = 1; j < dim_theta; ++j)
        r0_pred.col(j) = f.ws->predict(f.cross, f.ws->fit_weighted_like(sys, u0.col(j), r0_fit));
      const VectorXd slope_pred =
          f.ws->predict(f.cross, f.ws->fit_weighted_like(sys, VectorXd::Ones(nt), r0_fit));
      for (size_t i = 0; i < f.predict_rows.size(); ++i) {
        const int row = f.predict_rows[i];
        vals_.gt_slope[row] = slope_pred[static_cast<int>(i)];
        vals_.gt_r0.row(row) = r0_pred.row(static_cast<int>(i));
      }
    }
  }

 private:
  static void require_affine(const TargetFunction& target, const char* what) {
    if (!target.affine_unit_slope || !target.u0)
      throw FitError(std::string("fitted augmentation ") + what +
                     " requires a target that is affine in theta with identity slope");
  }

  struct Fold {
    std::vector<int> train_rows;    // out-of-fold union rows (kernel training set)
    std::vector<int> predict_rows;  // all rows of the held-out fold
    std::unique_ptr<GroupedWorkspace> ws;
    GroupedWorkspace::CrossContext cross;
  };

  const DualFrameDataset* ds_;
  NuisanceOptions opts_;
  std::vector<Fold> folds_;
  NuisanceValues vals_;
};

}  // namespace dualframe
