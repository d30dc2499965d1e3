#pragma once

// Variance estimation and Monte Carlo summaries: sandwich covariance for
// stacked Z-estimators, Wald intervals, replication summaries (bias, SD,
// RMSE, coverage), and a paired delete-one jackknife for the uncertainty of
// a difference of Monte Carlo standard deviations.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "dualframe/common.hpp"

namespace dualframe {

// Asymptotic covariance of a Z-estimator solving (1/n) sum_i s_i(theta) = 0:
//   Cov ~ J^{-1} Omega J^{-T} / n
// where J is the mean Jacobian of s and Omega the mean outer product of s.
// The result is symmetrized to wash out solve round-off.
inline Eigen::MatrixXd sandwich_covariance(const Eigen::MatrixXd& mean_jacobian,
                                           const Eigen::MatrixXd& mean_outer, double n) {
  if (mean_jacobian.rows() != mean_jacobian.cols())
    throw ArgumentError("sandwich_covariance: Jacobian must be square");
  if (mean_outer.rows() != mean_jacobian.rows() || mean_outer.cols() != mean_jacobian.cols())
    throw ArgumentError("sandwich_covariance: dimension mismatch");
  if (!(n > 0)) throw ArgumentError("sandwich_covariance: n must be positive");
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(mean_jacobian);
  Eigen::MatrixXd jinv;
  if (std::abs(lu.determinant()) > 1e-300) {
    jinv = lu.inverse();
  } else {
    jinv = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(mean_jacobian).pseudoInverse();
  }
  Eigen::MatrixXd cov = jinv * mean_outer * jinv.transpose() / n;
  return 0.5 * (cov + cov.transpose());
}

// Convenience: Omega from the rows of a per-unit score matrix (n x d).
inline Eigen::MatrixXd sandwich_from_scores(const Eigen::MatrixXd& unit_scores,
                                            const Eigen::MatrixXd& mean_jacobian) {
  const double n = static_cast<double>(unit_scores.rows());
  if (!(n > 0)) throw ArgumentError("sandwich_from_scores: no score rows");
  const Eigen::MatrixXd omega = unit_scores.transpose() * unit_scores / n;
  return sandwich_covariance(mean_jacobian, omega, n);
}

struct ConfInterval {
  double lo = kNaN;
  double hi = kNaN;
};

inline ConfInterval wald_interval(double estimate, double se, double alpha = 0.05) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("wald_interval: alpha must be in (0,1)");
  const double z = norm_quantile(1.0 - alpha / 2.0);
  return ConfInterval{estimate - z * se, estimate + z * se};
}

inline double sample_mean(const std::vector<double>& v) {
  if (v.empty()) throw ArgumentError("sample_mean: empty input");
  KahanSum acc;
  for (double x : v) acc.add(x);
  return acc.value() / static_cast<double>(v.size());
}

// Sample SD with the (n-1) denominator.
inline double sample_sd(const std::vector<double>& v) {
  const size_t n = v.size();
  if (n < 2) throw ArgumentError("sample_sd: need at least 2 values");
  const double m = sample_mean(v);
  KahanSum acc;
  for (double x : v) acc.add((x - m) * (x - m));
  return std::sqrt(acc.value() / static_cast<double>(n - 1));
}

struct McSummary {
  int n_total = 0;      // replications attempted
  int n_used = 0;       // replications with a finite estimate and SE
  double mean = kNaN;
  double bias = kNaN;
  double sd = kNaN;     // Monte Carlo SD of the point estimates, (R-1) denominator
  double rmse = kNaN;   // sqrt(mean squared error) over used replications
  double mean_se = kNaN;
  double coverage = kNaN;  // fraction of Wald intervals containing the truth
};

inline McSummary mc_summary(const std::vector<double>& estimates, const std::vector<double>& ses,
                            double truth, double alpha = 0.05) {
  if (estimates.size() != ses.size()) throw ArgumentError("mc_summary: estimates/ses size mismatch");
  McSummary s;
  s.n_total = static_cast<int>(estimates.size());
  std::vector<double> est, se;
  for (size_t i = 0; i < estimates.size(); ++i) {
    if (std::isfinite(estimates[i]) && std::isfinite(ses[i])) {
      est.push_back(estimates[i]);
      se.push_back(ses[i]);
    }
  }
  s.n_used = static_cast<int>(est.size());
  if (est.empty()) return s;
  s.mean = sample_mean(est);
  s.bias = s.mean - truth;
  if (est.size() >= 2) s.sd = sample_sd(est);
  KahanSum mse;
  for (double e : est) mse.add((e - truth) * (e - truth));
  s.rmse = std::sqrt(mse.value() / static_cast<double>(est.size()));
  s.mean_se = sample_mean(se);
  const double z = norm_quantile(1.0 - alpha / 2.0);
  int covered = 0;
  for (size_t i = 0; i < est.size(); ++i)
    if (std::abs(est[i] - truth) <= z * se[i]) ++covered;
  s.coverage = static_cast<double>(covered) / static_cast<double>(est.size());
  return s;
}

// Paired delete-one jackknife for the difference SD(a) - SD(b) over matched
// replications. Used to decide whether an observed efficiency ordering is
// larger than its own Monte Carlo noise.
struct SdGap {
  double gap = kNaN;  // SD(a) - SD(b)
  double se = kNaN;   // jackknife standard error of the gap
};

inline SdGap jackknife_sd_gap(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  if (b.size() != n) throw ArgumentError("jackknife_sd_gap: length mismatch");
  if (n < 3) throw ArgumentError("jackknife_sd_gap: need at least 3 paired values");
  SdGap out;
  out.gap = sample_sd(a) - sample_sd(b);
  std::vector<double> loo(n);
  std::vector<double> ares, bres;
  ares.reserve(n - 1);
  bres.reserve(n - 1);
  for (size_t i = 0; i < n; ++i) {
    ares.clear();
    bres.clear();
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      ares.push_back(a[j]);
      bres.push_back(b[j]);
    }
    loo[i] = sample_sd(ares) - sample_sd(bres);
  }
  const double loo_mean = sample_mean(loo);
  KahanSum acc;
  for (double v : loo) acc.add((v - loo_mean) * (v - loo_mean));
  out.se = std::sqrt(acc.value() * static_cast<double>(n - 1) / static_cast<double>(n));
  return out;
}

}  // namespace dualframe
