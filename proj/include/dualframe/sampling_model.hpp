#pragma once

// Parametric logistic model for the non-probability inclusion probability,
// union inclusion probabilities, and the harmonic-mean working probability
// for pi_p on units where it is unobserved.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>

#include "dualframe/common.hpp"
#include "dualframe/dataset.hpp"
#include "dualframe/features.hpp"

namespace dualframe {

class LogisticSamplingModel {
 public:
  LogisticSamplingModel(VectorXd phi, FeatureMap features, double eps = 1e-3)
      : phi_(std::move(phi)), features_(std::move(features)), eps_(eps) {
    if (phi_.size() != features_.dim())
      throw ArgumentError("coefficient vector length " + std::to_string(phi_.size()) +
                          " does not match feature dimension " + std::to_string(features_.dim()));
    if (!(eps_ > 0.0 && eps_ < 0.5)) throw ArgumentError("truncation eps must lie in (0, 0.5)");
  }

  const VectorXd& phi() const { return phi_; }
  const FeatureMap& features() const { return features_; }
  double eps() const { return eps_; }
  int dim() const { return static_cast<int>(phi_.size()); }

  LogisticSamplingModel with_phi(VectorXd phi) const {
    LogisticSamplingModel m(*this);
    if (phi.size() != m.phi_.size()) throw ArgumentError("with_phi: dimension change not allowed");
    m.phi_ = std::move(phi);
    return m;
  }

  struct Eval {
    double p = 0.0;   // clipped probability
    bool clipped = false;
    VectorXd v;       // feature vector V(L)
    // gradient = p(1-p) v, defined as zero in the clipped region
    double grad_scale() const { return clipped ? 0.0 : p * (1.0 - p); }
  };

  Eval eval(const UnitRecord& rec) const {
    Eval e;
    features_.evaluate(rec, e.v);
    const double t = phi_.dot(e.v);
    const double raw = expit(t);
    e.p = raw;
    if (raw < eps_) {
      e.p = eps_;
      e.clipped = true;
    } else if (raw > 1.0 - eps_) {
      e.p = 1.0 - eps_;
      e.clipped = true;
    }
    return e;
  }

  double pi_np(const UnitRecord& rec) const { return eval(rec).p; }

  VectorXd dpi_np(const UnitRecord& rec) const {
    const Eval e = eval(rec);
    return e.grad_scale() * e.v;
  }

 private:
  VectorXd phi_;
  FeatureMap features_;
  double eps_;
};

// Inclusion-exclusion union probability for independent draws.
inline double pi_union(double p_np, double p_p) { return p_np + p_p - p_np * p_p; }

// Conditional-mean learner interface: fit(X, targets) -> predictor(x_row).
// Implementations: constant_mean_learner below, krr_mean_learner (kernel_ridge.hpp).
using MeanPredictor = std::function<double(const Eigen::RowVectorXd&)>;
using MeanLearner = std::function<MeanPredictor(const XMatrix&, const VectorXd&)>;

inline MeanLearner constant_mean_learner() {
  return [](const XMatrix& X, const VectorXd& t) -> MeanPredictor {
    (void)X;
    const double m = t.mean();
    return [m](const Eigen::RowVectorXd&) { return m; };
  };
}

// Working probability pi_bar_p = 1 / E(1/pi_p | X, delta_p = 1): a fitted
// conditional mean of 1/pi_p, inverted with the fit floored at 1 so that the
// prediction stays in (0, 1].
class PiBarModel {
 public:
  PiBarModel() = default;
  explicit PiBarModel(MeanPredictor inv_mean) : inv_mean_(std::move(inv_mean)) {}

  double predict(const Eigen::RowVectorXd& x) const {
    if (!inv_mean_) throw FitError("pi_bar model not fitted");
    const double r = inv_mean_(x);
    return 1.0 / std::max(r, 1.0);
  }

  bool fitted() const { return static_cast<bool>(inv_mean_); }

 private:
  MeanPredictor inv_mean_;
};

// Regress 1/pi_p on X over the probability sample (optionally a subset of
// row indices, for cross-fitting).
inline PiBarModel fit_pi_bar(const DualFrameDataset& ds, const MeanLearner& learner,
                             const std::vector<int>* training_rows = nullptr) {
  std::vector<int> rows;
  if (training_rows) {
    for (int i : *training_rows)
      if (ds.delta_p[static_cast<size_t>(i)] == 1) rows.push_back(i);
  } else {
    for (int i = 0; i < ds.n_total(); ++i)
      if (ds.delta_p[static_cast<size_t>(i)] == 1) rows.push_back(i);
  }
  if (rows.size() < 2)
    throw FitError("fit_pi_bar needs at least 2 probability-sample records, got " + std::to_string(rows.size()));
  XMatrix X(static_cast<int>(rows.size()), ds.x_dim());
  VectorXd t(static_cast<int>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    X.row(static_cast<int>(r)) = ds.x.row(rows[r]);
    t[static_cast<int>(r)] = 1.0 / ds.pi_p[rows[r]];
  }
  return PiBarModel(learner(X, t));
}

// Working union probability: observed pi_p when delta_p = 1, else the fitted
// pi_bar_p, combined by inclusion-exclusion.
inline double working_pi_union(const LogisticSamplingModel& model, const PiBarModel& pi_bar,
                               const DualFrameDataset& ds, int row) {
  const UnitRecord rec = ds.record(row);
  const double p_np = model.pi_np(rec);
  const double p_p = (rec.delta_p == 1) ? rec.pi_p : pi_bar.predict(ds.x_row(row));
  return pi_union(p_np, p_p);
}

}  // namespace dualframe
