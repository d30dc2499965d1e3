#include <cstdio>

#include "dualframe/dualframe.hpp"

using namespace dualframe;

int main() {
  ScenarioConfig cfg = scenario_defaults("S1");
  cfg.n_pop = 10000;
  cfg.seed = 7;
  const DualFrameDataset pop = gen_population(cfg, 0);
  const DualFrameDataset ds = gen_samples(pop, cfg, 0);

  const FeatureMap fm = FeatureMap::parse({"1", "x1", "y"}, ds.covariate_names);
  const LogisticSamplingModel model(VectorXd::Zero(3), fm, 1e-3);
  const FoldPartition folds = split_folds(ds, 5, 1);
  NuisanceOptions nopts;
  CrossFitNuisances nuis(ds, folds, nopts);
  const VectorXd& pibar = nuis.values().pibar;

  VectorFn eq = identification_equation(ds, model, pibar);
  JacobianFn jac = [&](const VectorXd& phi) {
    return detail::eff_phi_jacobian(ds, model.with_phi(phi), pibar, nullptr, nullptr);
  };

  VectorXd phi_star(3);
  phi_star << -2.15, -0.5, -0.75;
  VectorXd g_star = eq(phi_star);
  std::printf("eq(phi*)      = %+.5e %+.5e %+.5e\n", g_star[0], g_star[1], g_star[2]);
  VectorXd g0 = eq(VectorXd::Zero(3));
  std::printf("eq(0)         = %+.5e %+.5e %+.5e\n", g0[0], g0[1], g0[2]);

  MatrixXd J = jac(phi_star);
  MatrixXd S = 0.5 * (J + J.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  std::printf("sym(J(phi*)) eig = %+.4e %+.4e %+.4e\n", es.eigenvalues()[0], es.eigenvalues()[1],
              es.eigenvalues()[2]);
  MatrixXd J0 = jac(VectorXd::Zero(3));
  MatrixXd S0 = 0.5 * (J0 + J0.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es0(S0);
  std::printf("sym(J(0))    eig = %+.4e %+.4e %+.4e\n", es0.eigenvalues()[0], es0.eigenvalues()[1],
              es0.eigenvalues()[2]);

  // Newton from the true value.
  SolverConfig scfg;
  RootResult r1 = solve_root(eq, phi_star, scfg, &jac);
  std::printf("from phi*: conv=%d iters=%d x=(%+.4f,%+.4f,%+.4f) |g|=%.2e\n", int(r1.converged), r1.iterations,
              r1.x[0], r1.x[1], r1.x[2], r1.g_norm);
  // Newton from zero.
  RootResult r0 = solve_root(eq, VectorXd::Zero(3), scfg, &jac);
  std::printf("from 0   : conv=%d iters=%d x=(%+.4f,%+.4f,%+.4f) |g|=%.2e\n", int(r0.converged), r0.iterations,
              r0.x[0], r0.x[1], r0.x[2], r0.g_norm);
  // Newton from the calibration baseline solution.
  VectorXd phi_ck(3);
  phi_ck << -2.161, -0.533, -0.662;
  RootResult r2 = solve_root(eq, phi_ck, scfg, &jac);
  std::printf("from ck  : conv=%d iters=%d x=(%+.4f,%+.4f,%+.4f) |g|=%.2e\n", int(r2.converged), r2.iterations,
              r2.x[0], r2.x[1], r2.x[2], r2.g_norm);
  return 0;
}
