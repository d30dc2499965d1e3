#include <algorithm>
#include <cstdio>
#include <vector>

#include "dualframe/dualframe.hpp"

using namespace dualframe;

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

  // Full-data pibar (good enough for the probe).
  const PiBarModel pb = fit_pi_bar(ds, krr_mean_learner());

  std::vector<int> urows;
  for (int r = 0; r < ds.n_total(); ++r)
    if (ds.record(r).in_union()) urows.push_back(r);
  const int nt = static_cast<int>(urows.size());

  XMatrix xt(nt, 1);
  VectorXd w(nt);
  for (int i = 0; i < nt; ++i) {
    const UnitRecord rec = ds.record(urows[static_cast<size_t>(i)]);
    xt(i, 0) = ds.x(urows[static_cast<size_t>(i)], 0);
    const UnitScoreEval e = build_unit_eval(model, pb.predict(Eigen::RowVectorXd(ds.x.row(urows[static_cast<size_t>(i)]))), rec);
    w[i] = (1.0 - e.pu) / (e.pu * e.pu);
  }
  VectorXd ws_sorted = w;
  std::sort(ws_sorted.data(), ws_sorted.data() + nt);
  std::printf("n_train=%d  w: min=%.3g q25=%.3g med=%.3g q75=%.3g q99=%.3g max=%.3g mean=%.3g\n", nt,
              ws_sorted[0], ws_sorted[nt / 4], ws_sorted[nt / 2], ws_sorted[3 * nt / 4],
              ws_sorted[static_cast<int>(0.99 * nt)], ws_sorted[nt - 1], w.mean());

  KernelWorkspace kw(xt, 0.0);
  std::printf("bandwidth=%.4f\n", kw.bandwidth());

  XMatrix xall(ds.n_total(), 1);
  for (int r = 0; r < ds.n_total(); ++r) xall(r, 0) = ds.x(r, 0);
  const MatrixXd cross = kw.cross_kernel(xall);

  const VectorXd z = kw.project(w);
  for (double lam : default_lambda_grid()) {
    const double lam_n = lam * nt;
    const double rss = kw.rss_at(z, lam_n);
    const double trs = kw.trs_at(lam_n);
    const double denom = std::max(nt - trs, 1e-12);
    const double gcv = rss * nt / (denom * denom);
    const VectorXd alpha = kw.alpha_at(z, lam_n);
    const VectorXd pred = cross * alpha;
    int neg = 0;
    for (int r = 0; r < pred.size(); ++r)
      if (pred[r] < 1e-6) ++neg;
    std::printf("lam=%8.2g rss=%10.4g trs=%8.2f gcv=%10.4g | pred min=%+9.3g max=%9.3g negs=%d\n", lam,
                rss, trs, gcv, pred.minCoeff(), pred.maxCoeff(), neg);
  }
  const KrrFit chosen = kw.fit(w);
  std::printf("GCV chooses lambda=%.2g\n", chosen.lambda);

  // Binned target means vs predictions at chosen lambda over x quantile bins.
  const VectorXd predc = cross * chosen.alpha;
  std::vector<int> order(static_cast<size_t>(nt));
  for (int i = 0; i < nt; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return xt(a, 0) < xt(b, 0); });
  const int nb = 12;
  std::printf("train-x bins: [x range] mean(w) vs pred@center\n");
  for (int b = 0; b < nb; ++b) {
    const int lo = b * nt / nb, hi = (b + 1) * nt / nb;
    double tw = 0.0, tx = 0.0;
    for (int i = lo; i < hi; ++i) {
      tw += w[order[static_cast<size_t>(i)]];
      tx += xt(order[static_cast<size_t>(i)], 0);
    }
    const double xc = tx / (hi - lo);
    Eigen::RowVectorXd xq(1);
    xq[0] = xc;
    const double p = (kw.cross_kernel(XMatrix(xq)) * chosen.alpha)(0, 0);
    std::printf("  [%+.2f..%+.2f] mean(w)=%9.3f pred=%+9.3f\n", xt(order[static_cast<size_t>(lo)], 0),
                xt(order[static_cast<size_t>(hi - 1)], 0), tw / (hi - lo), p);
  }
  return 0;
}
