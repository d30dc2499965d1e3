// Refresh-cap sensitivity probe: eff theta and timing at several caps.
#include <dualframe/dualframe.hpp>

#include <chrono>
#include <cstdio>
#include <vector>

using namespace dualframe;

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  ScenarioConfig cfg = scenario_defaults("S1");
  cfg.n_pop = 10000;
  cfg.seed = 20260819;
  cfg.replications = reps;
  for (int cap : {5, 3, 2, 1}) {
    EstimateOptions base;
    base.max_refresh = cap;
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioResult res = run_scenario(cfg, {"eff"}, base, 1);
    const auto t1 = std::chrono::steady_clock::now();
    const double sec = std::chrono::duration<double>(t1 - t0).count();
    std::printf("cap=%d  %5.2f s/rep  theta:", cap, sec / reps);
    for (double th : res.summaries[0].theta_hats) std::printf(" %+.6f", th);
    std::printf("  nconv=%d\n", res.summaries[0].n_nonconverged);
  }
  return 0;
}
