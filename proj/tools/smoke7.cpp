#include <cstdio>

#include "dualframe/dualframe.hpp"

using namespace dualframe;

int main(int argc, char** argv) {
  ScenarioConfig cfg = scenario_defaults(argc > 1 ? argv[1] : "S1");
  cfg.n_pop = 10000;
  cfg.seed = 20260819;
  cfg.replications = argc > 2 ? std::atoi(argv[2]) : 20;
  const std::vector<std::string> tokens = {"p", "np", "p_np", "subeff", "eff_union", "eff"};
  const ScenarioResult res = run_scenario(cfg, tokens, {}, 8);
  std::printf("%s  mean n_np=%.1f n_p=%.1f n_union=%.1f\n", cfg.scenario.c_str(), res.mean_n_np,
              res.mean_n_p, res.mean_n_union);
  std::printf("%-9s %8s %8s %8s %8s %8s %8s %5s %5s\n", "est", "mean", "bias", "sd", "rmse",
              "mean_se", "cover", "fail", "nconv");
  for (const EstimatorSummary& s : res.summaries) {
    std::printf("%-9s %+8.4f %+8.4f %8.4f %8.4f %8.4f %8.3f %5d %5d\n", s.estimator.c_str(),
                s.theta.mean, s.theta.bias, s.theta.sd, s.theta.rmse, s.theta.mean_se,
                s.theta.coverage, s.n_failed, s.n_nonconverged);
    if (s.dim_phi > 0 && s.phi_truth.size() > 0) {
      std::printf("          phi_mean=(");
      for (int j = 0; j < s.phi_mean.size(); ++j)
        std::printf("%s%+.3f", j ? "," : "", s.phi_mean[j]);
      std::printf(") cover=(");
      for (size_t j = 0; j < s.phi_coverage.size(); ++j)
        std::printf("%s%.2f", j ? "," : "", s.phi_coverage[j]);
      std::printf(")\n");
    }
  }
  return 0;
}
