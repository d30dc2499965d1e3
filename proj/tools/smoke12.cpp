// Scenario preview probe: estimator list + refresh cap on the command line.
#include <dualframe/dualframe.hpp>

#include <cstdio>
#include <string>
#include <vector>

using namespace dualframe;

int main(int argc, char** argv) {
  const std::string scen = argc > 1 ? argv[1] : "S1";
  const int reps = argc > 2 ? std::atoi(argv[2]) : 25;
  const int cap = argc > 3 ? std::atoi(argv[3]) : 2;
  std::vector<std::string> toks;
  for (int a = 4; a < argc; ++a) toks.push_back(argv[a]);
  if (toks.empty()) toks = {"eff"};
  ScenarioConfig cfg = scenario_defaults(scen);
  cfg.n_pop = 10000;
  cfg.seed = 20260819;
  cfg.replications = reps;
  EstimateOptions base;
  base.max_refresh = cap;
  ScenarioResult res = run_scenario(cfg, toks, base, 1);
  std::printf("%s reps=%d cap=%d  n_np=%.1f n_p=%.1f\n", scen.c_str(), reps, cap, res.mean_n_np, res.mean_n_p);
  for (const EstimatorSummary& s : res.summaries) {
    std::printf("%-10s mean=%+.4f sd=%.4f mean_se=%.4f cover=%.3f fail=%d nconv=%d\n", s.estimator.c_str(),
                s.theta.mean, s.theta.sd, s.theta.mean_se, s.theta.coverage, s.n_failed, s.n_nonconverged);
    if (s.dim_phi > 0 && s.phi_mean.size() > 0) {
      std::printf("           phi_mean=(");
      for (int j = 0; j < s.dim_phi; ++j) std::printf("%s%.3f", j ? "," : "", s.phi_mean[j]);
      std::printf(")\n");
    }
  }
  return 0;
}
