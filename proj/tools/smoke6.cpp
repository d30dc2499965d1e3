#include <algorithm>
#include <cstdio>
#include <vector>

#include "dualframe/dualframe.hpp"

using namespace dualframe;

namespace {

MatrixXd gauss_kernel(const XMatrix& a, const XMatrix& b, double h) {
  MatrixXd k(a.rows(), b.rows());
  const double inv = -1.0 / (2.0 * h * h);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j) k(i, j) = std::exp((a.row(i) - b.row(j)).squaredNorm() * inv);
  return k;
}

struct GcvPick {
  double lambda = 0.0;
  VectorXd coef;  // alpha (ratio) or gamma (weighted)
};

// GCV over the default grid given the eigenpairs of the system matrix and the
// (possibly weighted) response in original coordinates.
GcvPick gcv_solve(const VectorXd& eigval, const MatrixXd& eigvec, const VectorXd& y, int n) {
  const VectorXd z = eigvec.transpose() * y;
  double best_gcv = std::numeric_limits<double>::infinity(), best_lam = 0.0;
  for (double lam : default_lambda_grid()) {
    const double lam_n = lam * n;
    double rss = 0.0, trs = 0.0;
    for (int i = 0; i < z.size(); ++i) {
      const double r = lam_n * z[i] / (eigval[i] + lam_n);
      rss += r * r;
      trs += eigval[i] / (eigval[i] + lam_n);
    }
    const double denom = std::max(n - trs, 1e-12);
    const double gcv = rss * n / (denom * denom);
    if (gcv < best_gcv) {
      best_gcv = gcv;
      best_lam = lam;
    }
  }
  GcvPick out;
  out.lambda = best_lam;
  VectorXd wcoef(z.size());
  for (int i = 0; i < z.size(); ++i) wcoef[i] = z[i] / (eigval[i] + best_lam * n);
  out.coef = eigvec * wcoef;
  return out;
}

}  // namespace

int main() {
  ScenarioConfig cfg = scenario_defaults("S1");
  cfg.n_pop = 10000;
  cfg.seed = 7;
  const DualFrameDataset pop = gen_population(cfg, 0);
  const DualFrameDataset ds = gen_samples(pop, cfg, 0);

  EstimateOptions opts;
  opts.model_features = scenario_model_features(cfg);
  const FeatureMap fm = FeatureMap::parse(opts.model_features, ds.covariate_names);
  VectorXd phi(3);
  phi << -2.0486, -0.5849, -0.8889;
  const LogisticSamplingModel model(phi, fm, opts.clip_eps);
  const PiBarModel pb = fit_pi_bar(ds, krr_mean_learner());

  const int n_all = ds.n_total();
  std::vector<int> urows;
  for (int r = 0; r < n_all; ++r)
    if (ds.record(r).in_union()) urows.push_back(r);
  const int nt = static_cast<int>(urows.size());

  XMatrix xt(nt, 1), xall(n_all, 1);
  VectorXd w(nt), u0t(nt);
  for (int i = 0; i < nt; ++i) {
    const int r = urows[static_cast<size_t>(i)];
    const UnitRecord rec = ds.record(r);
    xt(i, 0) = ds.x(r, 0);
    const UnitScoreEval e = build_unit_eval(model, pb.predict(Eigen::RowVectorXd(ds.x.row(r))), rec);
    w[i] = (1.0 - e.pu) / (e.pu * e.pu);
    u0t[i] = -rec.y;
  }
  for (int r = 0; r < n_all; ++r) xall(r, 0) = ds.x(r, 0);

  // Per-row score pieces at phi-hat (shared by every variant below).
  VectorXd Rv(n_all), cv(n_all), u0all(n_all);
  for (int r = 0; r < n_all; ++r) {
    const UnitRecord rec = ds.record(r);
    const UnitScoreEval e = build_unit_eval(model, pb.predict(Eigen::RowVectorXd(ds.x.row(r))), rec);
    Rv[r] = residual_r(e);
    cv[r] = c_eff_theta(e);
    u0all[r] = cv[r] != 0.0 ? -rec.y : 0.0;
  }
  const double sum_c = cv.sum(), sum_cu = cv.dot(u0all);

  const double h_med = median_heuristic_bandwidth(xt);
  std::printf("h_med=%.4f  baseline: theta(no aug)=%.4f\n", h_med, -sum_cu / sum_c);

  std::printf("--- A: ratio of fits, bandwidth grid ---\n");
  for (double mult : {1.0, 0.5, 1.0 / 3.0, 0.25}) {
    const double h = mult * h_med;
    MatrixXd K = gauss_kernel(xt, xt, h);
    VectorXd ev;
    MatrixXd Q;
    detail::sym_eig(K, ev, Q);
    for (int i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], 0.0);
    const GcvPick den = gcv_solve(ev, Q, w, nt);
    // numerator reuses the denominator lambda
    VectorXd zn = Q.transpose() * VectorXd(u0t.cwiseProduct(w));
    VectorXd gn(zn.size());
    for (int i = 0; i < zn.size(); ++i) gn[i] = zn[i] / (ev[i] + den.lambda * nt);
    const VectorXd alpha_num = Q * gn;
    const MatrixXd cross = gauss_kernel(xall, xt, h);
    const VectorXd dpred = cross * den.coef, npred = cross * alpha_num;
    int negs = 0;
    double sum_rr = 0.0, sum_rs = 0.0, r0min = 1e300, r0max = -1e300;
    for (int r = 0; r < n_all; ++r) {
      const double d = dpred[r];
      const double dd = std::max(d, 1e-6);
      if (d < 1e-6) ++negs;
      const double r0 = npred[r] / dd, slope = d / dd;
      sum_rr += Rv[r] * r0;
      sum_rs += Rv[r] * slope;
      r0min = std::min(r0min, r0);
      r0max = std::max(r0max, r0);
    }
    const double theta = -(sum_cu + sum_rr) / (sum_c + sum_rs);
    std::printf("h=%.3f lam=%7.2g negs=%4d r0 in [%+.3g, %+.3g]  theta=%+.4f\n", h, den.lambda, negs,
                r0min, r0max, theta);
  }

  std::printf("--- B: weighted KRR of u0 (weights w) ---\n");
  for (double mult : {1.0, 0.5, 1.0 / 3.0}) {
    const double h = mult * h_med;
    MatrixXd K = gauss_kernel(xt, xt, h);
    const VectorXd dsq = w.cwiseSqrt();
    MatrixXd M = dsq.asDiagonal() * K * dsq.asDiagonal();
    VectorXd ev;
    MatrixXd Q;
    detail::sym_eig(M, ev, Q);
    for (int i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], 0.0);
    const GcvPick g = gcv_solve(ev, Q, VectorXd(dsq.cwiseProduct(u0t)), nt);
    // slope: weighted fit of the constant-1 target at the same lambda
    VectorXd z1 = Q.transpose() * dsq;
    VectorXd g1(z1.size());
    for (int i = 0; i < z1.size(); ++i) g1[i] = z1[i] / (ev[i] + g.lambda * nt);
    const MatrixXd cross = gauss_kernel(xall, xt, h);
    const VectorXd r0p = cross * VectorXd(dsq.cwiseProduct(g.coef));
    const VectorXd slp = cross * VectorXd(dsq.cwiseProduct(Q * g1));
    double sum_rr = 0.0, sum_rs = 0.0;
    const double theta =
        -(sum_cu + Rv.dot(r0p)) / (sum_c + Rv.dot(slp));
    sum_rr = Rv.dot(r0p);
    sum_rs = Rv.dot(slp);
    std::printf("h=%.3f lam=%7.2g r0 in [%+.3g, %+.3g] slope in [%+.3g, %+.3g] mean(R*r0)=%+.4f mean(R*slope)=%+.4f theta=%+.4f\n",
                h, g.lambda, r0p.minCoeff(), r0p.maxCoeff(), slp.minCoeff(), slp.maxCoeff(),
                sum_rr / n_all, sum_rs / n_all, theta);
  }
  return 0;
}
