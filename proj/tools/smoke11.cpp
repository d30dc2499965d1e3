// P-design variance probe: theoretical Poisson-design variance of the
// probability-only IPW mean vs the sandwich estimate, plus weight quantiles.
#include <dualframe/dualframe.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

using namespace dualframe;

int main() {
  ScenarioConfig cfg = scenario_defaults("S1");
  cfg.n_pop = 10000;
  cfg.seed = 20260819;
  double v_theory_acc = 0.0;
  double mean_pi_acc = 0.0;
  int reps = 50;
  std::vector<double> wmax;
  for (int rep = 0; rep < reps; ++rep) {
    const DualFrameDataset pop = gen_population(cfg, rep);
    const int n = pop.n_total();
    // theta0 = 0; r = y. V = sum (1-pi) y^2 / pi / N^2 for the HT numerator,
    // Hajek-linearized with r = y - theta0.
    double v = 0.0, mp = 0.0, wmx = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = pop.x(i, 0);
      const double pi = 1.0 / (1.0 + std::exp(3.0 + 0.25 * (x - 2.0) * (x - 2.0)));
      const double r = pop.record(i).y;  // theta0 = 0
      v += (1.0 - pi) * r * r / pi;
      mp += pi;
      wmx = std::max(wmx, 1.0 / pi);
    }
    v /= static_cast<double>(n) * static_cast<double>(n);
    v_theory_acc += std::sqrt(v);
    mean_pi_acc += mp;
    wmax.push_back(wmx);
  }
  std::sort(wmax.begin(), wmax.end());
  std::printf("mean design sd of theta_P over %d pops: %.4f\n", reps, v_theory_acc / reps);
  std::printf("mean E[n_P] per pop: %.2f\n", mean_pi_acc / reps);
  std::printf("population max weight (median over pops): %.0f\n", wmax[wmax.size() / 2]);
  return 0;
}
