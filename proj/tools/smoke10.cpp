// Cheap-estimator coverage probe at the full replication count.
#include <dualframe/dualframe.hpp>

#include <cstdio>
#include <string>
#include <vector>

using namespace dualframe;

int main(int argc, char** argv) {
  const std::string scen = argc > 1 ? argv[1] : "S1";
  const int reps = argc > 2 ? std::atoi(argv[2]) : 200;
  ScenarioConfig cfg = scenario_defaults(scen);
  cfg.n_pop = 10000;
  cfg.seed = 20260819;
  cfg.replications = reps;
  ScenarioResult res = run_scenario(cfg, {"p", "np", "p_np"}, {}, 1);
  std::printf("%s  n_np=%.1f n_p=%.1f\n", scen.c_str(), res.mean_n_np, res.mean_n_p);
  for (const EstimatorSummary& s : res.summaries) {
    std::printf("%-6s mean=%+.4f sd=%.4f mean_se=%.4f cover=%.3f fail=%d nconv=%d\n", s.estimator.c_str(),
                s.theta.mean, s.theta.sd, s.theta.mean_se, s.theta.coverage, s.n_failed, s.n_nonconverged);
  }
  return 0;
}
