#include "dualframe/dualframe.hpp"

int main() {
  dualframe::ScenarioConfig cfg = dualframe::scenario_defaults("S1");
  cfg.n_pop = 200;
  cfg.replications = 1;
  const dualframe::DualFrameDataset pop = dualframe::gen_population(cfg, 0);
  const dualframe::DualFrameDataset ds = dualframe::gen_samples(pop, cfg, 0);
  dualframe::EstimateOptions opts;
  opts.dml.estimator = "p";
  const dualframe::EstimateReport rep = dualframe::estimate(ds, opts);
  return rep.converged ? 0 : 1;
}
