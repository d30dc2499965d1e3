#include <cstdio>

#include "dualframe/dualframe.hpp"

using namespace dualframe;

int main() {
  ScenarioConfig cfg = scenario_defaults("S1");
  cfg.n_pop = 10000;
  cfg.seed = 7;
  const DualFrameDataset pop = gen_population(cfg, 0);
  const DualFrameDataset ds = gen_samples(pop, cfg, 0);
  std::printf("n_np=%d n_p=%d n_union=%d\n", ds.count_np(), ds.count_p(), ds.count_union());

  for (const char* est : {"p", "np", "p_np", "subeff", "eff_union", "eff"}) {
    EstimateOptions opts;
    opts.dml.estimator = est;
    opts.model_features = scenario_model_features(cfg);
    try {
      const EstimateReport r = estimate(ds, opts);
      std::printf("%-9s theta=%+.4f se=%.4f conv=%d", est, r.theta[0], r.theta_se[0], int(r.converged));
      if (r.has_phi) {
        std::printf("  phi=(");
        for (int j = 0; j < r.phi.size(); ++j) std::printf("%s%+.3f", j ? "," : "", r.phi[j]);
        std::printf(") step2=%d refreshes=%d norm=%.2e", int(r.step2_accepted), r.refreshes, r.final_norm);
      }
      std::printf("\n");
    } catch (const std::exception& ex) {
      std::printf("%-9s FAILED: %s\n", est, ex.what());
    }
  }
  return 0;
}
