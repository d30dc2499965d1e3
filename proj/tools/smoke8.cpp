// Per-estimator timing probe: run_scenario with one estimator at a time.
#include <dualframe/dualframe.hpp>

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

using namespace dualframe;

int main(int argc, char** argv) {
  const std::string scen = argc > 1 ? argv[1] : "S1";
  const int reps = argc > 2 ? std::atoi(argv[2]) : 2;
  ScenarioConfig cfg = scenario_defaults(scen);
  cfg.n_pop = 10000;
  cfg.seed = 20260819;
  cfg.replications = reps;
  const std::vector<std::string> all = {"p", "np", "p_np", "subeff", "eff_union", "eff"};
  for (const std::string& est : all) {
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioResult res = run_scenario(cfg, {est}, {}, 1);
    const auto t1 = std::chrono::steady_clock::now();
    const double sec = std::chrono::duration<double>(t1 - t0).count();
    std::printf("%-10s %6.2f s/rep  (total %7.2f s, fail=%d nconv=%d)\n", est.c_str(), sec / reps, sec,
                res.summaries[0].n_failed, res.summaries[0].n_nonconverged);
  }
  return 0;
}
