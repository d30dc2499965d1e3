#pragma once

// Per-unit estimating functions: the target U, Horvitz-Thompson and
// calibration terms, the proposed identification equation, the efficient
// scores for (theta, phi), the sub-efficient score, and their analytic
// phi-derivatives.
//
// Pattern (0,0) carries no outcome, and every coefficient that would multiply
// Y is algebraically zero there. All functions below short-circuit on that
// pattern so the missing outcome (and a sampling model that reads Y) is never
// touched:
//     R(0,0) = 1,  c(0,0) = 0,  lead(0,0) = 0,  and all phi-derivatives = 0.

#include <functional>
#include <string>

#include "dualframe/common.hpp"
#include "dualframe/dataset.hpp"
#include "dualframe/sampling_model.hpp"

namespace dualframe {

// ---------------------------------------------------------------------------
// Target function U(theta; L)

struct TargetFunction {
  int dim = 1;
  // U(theta; L) = theta + u0(L) componentwise (identity slope). Enables exact
  // affine solves and exact handling of the theta-dependence of fitted
  // augmentations.
  bool affine_unit_slope = false;
  std::function<void(const VectorXd& theta, const UnitRecord&, VectorXd&)> evaluate;
  std::function<void(const UnitRecord&, VectorXd&)> u0;  // set when affine_unit_slope

  // Population-mean target: U(theta; L) = theta - Y.
  static TargetFunction mean() {
    TargetFunction t;
    t.dim = 1;
    t.affine_unit_slope = true;
    t.evaluate = [](const VectorXd& theta, const UnitRecord& rec, VectorXd& out) {
      if (is_missing(rec.y))
        throw EvalError("target needs an observed outcome (unit id " + std::to_string(rec.id) + ")");
      out.resize(1);
      out[0] = theta[0] - rec.y;
    };
    t.u0 = [](const UnitRecord& rec, VectorXd& out) {
      if (is_missing(rec.y))
        throw EvalError("target needs an observed outcome (unit id " + std::to_string(rec.id) + ")");
      out.resize(1);
      out[0] = -rec.y;
    };
    return t;
  }
};

inline double u_mean(double theta, const UnitRecord& rec) {
  if (is_missing(rec.y)) throw EvalError("outcome missing for unit id " + std::to_string(rec.id));
  return theta - rec.y;
}

// ---------------------------------------------------------------------------
// Per-unit evaluation bundle

struct UnitScoreEval {
  int d_np = 0, d_p = 0;
  double pi_p = kNaN;   // observed inclusion probability (NaN unless d_p = 1)
  double pibar = kNaN;  // fitted working probability pi_bar_p(L)
  double s = kNaN;      // pi_np(phi; L); NaN on (0,0) when the model reads Y
  double pu = kNaN;     // working union probability; NaN in the same case
  bool has_model = false;

  // phi-gradient pieces (valid when has_model):
  VectorXd v;               // model feature vector V(L)
  double grad_scale = 0.0;  // s(1-s), zero in the clipped region
  double hess_scale = 0.0;  // s(1-s)(1-2s), zero in the clipped region

  bool neither() const { return d_np == 0 && d_p == 0; }
  double pi_p_eff() const { return d_p == 1 ? pi_p : pibar; }
};

// Evaluates model-dependent quantities for one unit. On (0,0) rows with a
// Y-reading model, the model is not evaluated at all; every score below is
// pattern-forced there.
inline UnitScoreEval build_unit_eval(const LogisticSamplingModel& model, double pibar_value, const UnitRecord& rec) {
  UnitScoreEval e;
  e.d_np = rec.delta_np;
  e.d_p = rec.delta_p;
  e.pi_p = rec.pi_p;
  e.pibar = pibar_value;
  if (e.neither() && model.features().uses_y()) return e;
  const LogisticSamplingModel::Eval me = model.eval(rec);
  e.has_model = true;
  e.s = me.p;
  e.v = me.v;
  e.grad_scale = me.grad_scale();
  e.hess_scale = me.clipped ? 0.0 : me.p * (1.0 - me.p) * (1.0 - 2.0 * me.p);
  e.pu = pi_union(e.s, e.pi_p_eff());
  return e;
}

// ---------------------------------------------------------------------------
// Scalar building blocks

// Residual R (augmentation multiplier):
//   R = (1 - d_np d_p / (s pi_p)) - (d_np / pu)(1 - d_p/pi_p) - (d_p / pu)(1 - d_np/s).
inline double residual_r(const UnitScoreEval& e) {
  if (e.neither()) return 1.0;
  const double t1 = 1.0 - ((e.d_np == 1 && e.d_p == 1) ? 1.0 / (e.s * e.pi_p) : 0.0);
  const double t2 = (e.d_np == 1) ? (1.0 - (e.d_p == 1 ? 1.0 / e.pi_p : 0.0)) / e.pu : 0.0;
  const double t3 = (e.d_p == 1) ? (1.0 - (e.d_np == 1 ? 1.0 / e.s : 0.0)) / e.pu : 0.0;
  return t1 - t2 - t3;
}

// Coefficient of U(theta) in the efficient theta-score:
//   c = d_p/pi_p + (1 - d_p/pi_p) (1/pu) [d_np - d_p (d_np - s)].
inline double c_eff_theta(const UnitScoreEval& e) {
  if (e.neither()) return 0.0;
  const double a = (e.d_p == 1) ? 1.0 / e.pi_p : 0.0;
  const double bracket = e.d_np - e.d_p * (e.d_np - e.s);
  return a + (1.0 - a) * bracket / e.pu;
}

// Brace of the identification lead term:
//   b = (d_np/s)(1 - d_p/pi_p) pibar - (d_p/(1-s))(1 - d_np/s).
inline double lead_brace(const UnitScoreEval& e) {
  if (e.neither()) return 0.0;
  const double t1 = (e.d_np == 1) ? (1.0 - (e.d_p == 1 ? 1.0 / e.pi_p : 0.0)) * e.pibar / e.s : 0.0;
  const double t2 = (e.d_p == 1) ? (1.0 - (e.d_np == 1 ? 1.0 / e.s : 0.0)) / (1.0 - e.s) : 0.0;
  return t1 - t2;
}

// Lead term of the phi-score / identification equation: sdot * b / pu.
inline VectorXd lead_phi(const UnitScoreEval& e, int dim_phi) {
  if (e.neither() || e.grad_scale == 0.0) return VectorXd::Zero(dim_phi);
  return (e.grad_scale * lead_brace(e) / e.pu) * e.v;
}

// ---------------------------------------------------------------------------
// Per-unit scores

// Efficient score for theta: c U(theta) + R h4(X). `u` may be null only when
// c = 0 (pattern (0,0)); h4 has the target dimension.
inline VectorXd s_eff_theta_unit(const UnitScoreEval& e, const VectorXd* u, const VectorXd& h4) {
  const double c = c_eff_theta(e);
  const double r = residual_r(e);
  if (c == 0.0) return r * h4;
  if (u == nullptr) throw EvalError("internal: U(theta) required on a pattern with nonzero weight");
  return c * (*u) + r * h4;
}

// Efficient score for phi: lead - R eta4(X).
inline VectorXd s_eff_phi_unit(const UnitScoreEval& e, const VectorXd& eta4) {
  return lead_phi(e, static_cast<int>(eta4.size())) - residual_r(e) * eta4;
}

// Proposed identification equation integrand: lead + R k(X).
inline VectorXd proposed_phi_unit(const UnitScoreEval& e, const VectorXd& k_val) {
  return lead_phi(e, static_cast<int>(k_val.size())) + residual_r(e) * k_val;
}

// Sub-efficient score: d_np U + (1-d_np){ (d_p/pi_p) U + (1 - d_p/pi_p) gtilde }.
// Needs no sampling model. `u` may be null only on pattern (0,0).
inline VectorXd s_subeff_unit(int d_np, int d_p, double pi_p, const VectorXd* u, const VectorXd& gtilde) {
  if (d_np == 0 && d_p == 0) return gtilde;
  if (u == nullptr) throw EvalError("internal: U(theta) required on a sampled pattern");
  if (d_np == 1) return *u;
  const double a = (d_p == 1) ? 1.0 / pi_p : 0.0;
  return a * (*u) + (1.0 - a) * gtilde;
}

// Baseline per-unit terms.
inline VectorXd ht_p_unit(int d_p, double pi_p, const VectorXd& u) {
  return (d_p == 1) ? VectorXd((1.0 / pi_p) * u) : VectorXd(VectorXd::Zero(u.size()));
}
inline VectorXd ht_np_unit(const UnitScoreEval& e, const VectorXd& u) {
  return (e.d_np == 1) ? VectorXd((1.0 / e.s) * u) : VectorXd(VectorXd::Zero(u.size()));
}
inline VectorXd chang_kott_unit(const UnitScoreEval& e, const VectorXd& g) {
  const double w = 1.0 - (e.d_np == 1 ? 1.0 / e.s : 0.0);
  return w * g;
}
inline VectorXd union_ee_unit(const UnitScoreEval& e, const VectorXd& g) {
  const int d_u = (e.d_np == 1 || e.d_p == 1) ? 1 : 0;
  const double w = 1.0 - (d_u == 1 ? 1.0 / e.pu : 0.0);
  return w * g;
}
inline VectorXd ht_union_unit(const UnitScoreEval& e, const VectorXd& u) {
  const int d_u = (e.d_np == 1 || e.d_p == 1) ? 1 : 0;
  return (d_u == 1) ? VectorXd((1.0 / e.pu) * u) : VectorXd(VectorXd::Zero(u.size()));
}

// ---------------------------------------------------------------------------
// Analytic phi-derivatives (nuisance functions held fixed). For a clipped or
// pattern-(0,0) unit every derivative is zero, matching the zero-gradient
// convention of the sampling model.

// ds/dphi and d(pu)/dphi.
inline VectorXd sdot(const UnitScoreEval& e) {
  if (!e.has_model || e.grad_scale == 0.0) return VectorXd::Zero(e.has_model ? e.v.size() : 0);
  return e.grad_scale * e.v;
}

// dR/dphi.
inline VectorXd dresidual_r_dphi(const UnitScoreEval& e, int dim_phi) {
  if (e.neither() || !e.has_model || e.grad_scale == 0.0) return VectorXd::Zero(dim_phi);
  const VectorXd sd = e.grad_scale * e.v;
  const VectorXd ud = (1.0 - e.pi_p_eff()) * sd;
  VectorXd out = VectorXd::Zero(dim_phi);
  if (e.d_np == 1 && e.d_p == 1) out += (1.0 / (e.s * e.s * e.pi_p)) * sd;
  if (e.d_np == 1) out += ((1.0 - (e.d_p == 1 ? 1.0 / e.pi_p : 0.0)) / (e.pu * e.pu)) * ud;
  if (e.d_p == 1) {
    out += ((1.0 - (e.d_np == 1 ? 1.0 / e.s : 0.0)) / (e.pu * e.pu)) * ud;
    if (e.d_np == 1) out -= (1.0 / (e.pu * e.s * e.s)) * sd;
  }
  return out;
}

// dc/dphi for the efficient theta-score coefficient.
inline VectorXd dc_eff_theta_dphi(const UnitScoreEval& e, int dim_phi) {
  if (e.neither() || !e.has_model || e.grad_scale == 0.0) return VectorXd::Zero(dim_phi);
  const VectorXd sd = e.grad_scale * e.v;
  const VectorXd ud = (1.0 - e.pi_p_eff()) * sd;
  const double a = (e.d_p == 1) ? 1.0 / e.pi_p : 0.0;
  const double bracket = e.d_np - e.d_p * (e.d_np - e.s);
  VectorXd out = (1.0 - a) * (-bracket / (e.pu * e.pu)) * ud;
  if (e.d_p == 1) out += ((1.0 - a) / e.pu) * sd;
  return out;
}

// d(lead)/dphi^T, a dim_phi x dim_phi matrix.
inline MatrixXd dlead_dphi(const UnitScoreEval& e, int dim_phi) {
  if (e.neither() || !e.has_model || e.grad_scale == 0.0) return MatrixXd::Zero(dim_phi, dim_phi);
  const VectorXd sd = e.grad_scale * e.v;
  const VectorXd ud = (1.0 - e.pi_p_eff()) * sd;
  const double b = lead_brace(e);
  // db/dphi
  double db_scale = 0.0;
  if (e.d_np == 1) db_scale -= (1.0 - (e.d_p == 1 ? 1.0 / e.pi_p : 0.0)) * e.pibar / (e.s * e.s);
  if (e.d_p == 1) {
    const double om = 1.0 - e.s;
    db_scale -= (1.0 - (e.d_np == 1 ? 1.0 / e.s : 0.0)) / (om * om);
    if (e.d_np == 1) db_scale -= 1.0 / (om * e.s * e.s);
  }
  const VectorXd db = db_scale * sd;
  MatrixXd out = (e.hess_scale * b / e.pu) * (e.v * e.v.transpose());
  out.noalias() += (1.0 / e.pu) * (sd * db.transpose());
  out.noalias() -= (b / (e.pu * e.pu)) * (sd * ud.transpose());
  return out;
}

// d/dphi of the Chang-Kott term (1 - d_np/s) g: (d_np/s^2) g sdot^T.
inline MatrixXd dchang_kott_dphi(const UnitScoreEval& e, const VectorXd& g) {
  const int dim_phi = e.has_model ? static_cast<int>(e.v.size()) : 0;
  if (e.d_np != 1 || !e.has_model || e.grad_scale == 0.0)
    return MatrixXd::Zero(g.size(), dim_phi);
  const VectorXd sd = e.grad_scale * e.v;
  return (1.0 / (e.s * e.s)) * (g * sd.transpose());
}

// d/dphi of the union-calibration term (1 - d_u/pu) g: (d_u/pu^2) g udot^T.
inline MatrixXd dunion_ee_dphi(const UnitScoreEval& e, const VectorXd& g) {
  const int dim_phi = e.has_model ? static_cast<int>(e.v.size()) : 0;
  const int d_u = (e.d_np == 1 || e.d_p == 1) ? 1 : 0;
  if (d_u == 0 || !e.has_model || e.grad_scale == 0.0) return MatrixXd::Zero(g.size(), dim_phi);
  const VectorXd ud = (1.0 - e.pi_p_eff()) * (e.grad_scale * e.v);
  return (1.0 / (e.pu * e.pu)) * (g * ud.transpose());
}

}  // namespace dualframe
