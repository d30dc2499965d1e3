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
  opts.dml.estimator = "eff";
  opts.model_features = scenario_model_features(cfg);

  const FeatureMap fm = FeatureMap::parse(opts.model_features, ds.covariate_names);
  VectorXd phi(3);
  phi << -2.0486, -0.5849, -0.8889;
  const LogisticSamplingModel model(phi, fm, opts.clip_eps);

  const FoldPartition folds = split_folds(ds, opts.dml.folds, opts.dml.seed);
  CrossFitNuisances nuis(ds, folds, opts.nuisance);
  const TargetFunction target = TargetFunction::mean();
  nuis.refit_model_nuisances(model, target);
  const NuisanceValues& nv = nuis.values();

  std::printf("pibar_clamp_count=%d\n", nv.pibar_clamp_count);

  const int n = ds.n_total();
  double smin = 1e300, smax = -1e300;
  int off = 0;
  double r0min = 1e300, r0max = -1e300, e4min = 1e300, e4max = -1e300;
  KahanSum mc, mr, mcu, mrr, mrs;
  struct RowInfo {
    double mag;
    int row;
    double R, slope, r0, s, pu, pi_p;
    int dnp, dp;
  };
  std::vector<RowInfo> top;
  VectorXd u0(1);
  for (int row = 0; row < n; ++row) {
    const UnitRecord& rec = ds.record(row);
    const UnitScoreEval e = build_unit_eval(model, nv.pibar[row], rec);
    const double R = residual_r(e);
    const double c = c_eff_theta(e);
    const double slope = nv.h4_slope[row];
    const double r0 = nv.h4_r0(row, 0);
    smin = std::min(smin, slope);
    smax = std::max(smax, slope);
    if (std::abs(slope - 1.0) > 1e-9) ++off;
    r0min = std::min(r0min, r0);
    r0max = std::max(r0max, r0);
    e4min = std::min(e4min, nv.eta4.row(row).minCoeff());
    e4max = std::max(e4max, nv.eta4.row(row).maxCoeff());
    if (c != 0.0)
      target.u0(rec, u0);
    else
      u0[0] = 0.0;
    mc.add(c);
    mr.add(R);
    mcu.add(c * u0[0]);
    mrr.add(R * r0);
    mrs.add(R * slope);
    top.push_back({std::abs(R * r0), row, R, slope, r0, e.s, e.pu, rec.pi_p,
                   rec.delta_np ? 1 : 0, rec.delta_p ? 1 : 0});
  }
  std::printf("slope: min=%.4g max=%.4g off_one=%d\n", smin, smax, off);
  std::printf("r0:    min=%.4g max=%.4g\n", r0min, r0max);
  std::printf("eta4:  min=%.4g max=%.4g\n", e4min, e4max);
  std::printf("mean(c)=%.6f mean(R)=%.6f mean(c*u0)=%.6f mean(R*r0)=%.6f mean(R*slope)=%.6f\n",
              mc.value() / n, mr.value() / n, mcu.value() / n, mrr.value() / n,
              mrs.value() / n);
  std::printf("implied theta = %.4f\n",
              -(mcu.value() + mrr.value()) / (mc.value() + mrs.value()));

  std::sort(top.begin(), top.end(), [](const RowInfo& a, const RowInfo& b) { return a.mag > b.mag; });
  std::printf("top |R*r0| rows:\n");
  for (int i = 0; i < 12; ++i) {
    const RowInfo& t = top[static_cast<size_t>(i)];
    std::printf("  row=%5d dnp=%d dp=%d pi_p=%.4f s=%.4f pu=%.4f R=%+.3f slope=%+.4g r0=%+.4g R*r0=%+.4g\n",
                t.row, t.dnp, t.dp, t.pi_p, t.s, t.pu, t.R, t.slope, t.r0, t.R * t.r0);
  }
  return 0;
}
