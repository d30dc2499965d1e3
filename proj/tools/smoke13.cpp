// S2 classical-estimator failure-mode probe: per-rep solver diagnostics.
#include <dualframe/dualframe.hpp>

#include <cstdio>

using namespace dualframe;

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 30;
  ScenarioConfig cfg = scenario_defaults("S2");
  cfg.n_pop = 10000;
  cfg.seed = 20260819;
  for (int rep = 0; rep < reps; ++rep) {
    const DualFrameDataset pop = gen_population(cfg, rep);
    const DualFrameDataset ds = gen_samples(pop, cfg, rep);
    EstimateOptions opts;
    opts.dml.estimator = "np";
    opts.model_features = scenario_model_features(cfg);
    const EstimateReport r = estimate(ds, opts);
    std::printf("rep %2d conv=%d iter=%3d norm=%9.2e theta=%+8.3f se=%9.2e phi=(%+6.2f,%+6.2f,%+6.2f)\n", rep,
                r.converged ? 1 : 0, r.iterations, r.final_norm, r.theta[0], r.theta_se[0], r.phi[0], r.phi[1],
                r.phi[2]);
  }
  return 0;
}
