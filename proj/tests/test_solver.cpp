// Damped Newton root solver, finite-difference Jacobians, the two-step
// augmented solve with acceptance radius, and the monotonicity diagnostic.

#include "helpers.hpp"

#include <cmath>

#include "dualframe/solver.hpp"

using namespace dualframe;

namespace {
VectorXd vec1(double v) {
  VectorXd out(1);
  out[0] = v;
  return out;
}
}  // namespace

TEST_CASE("solve_root: affine equation converges in one step", "[solver]") {
  const VectorFn f = [](const VectorXd& x) { return vec1(x[0] - 2.0); };
  const RootResult res = solve_root(f, vec1(0.0));
  CHECK(res.converged);
  CHECK(res.x[0] == Catch::Approx(2.0).margin(1e-10));
  CHECK(res.iterations == 1);
  CHECK(res.g_norm < 1e-8);
  CHECK_FALSE(res.used_pseudo_inverse);
}

TEST_CASE("solve_root: nonlinear 2-d system", "[solver]") {
  const VectorFn f = [](const VectorXd& x) {
    VectorXd g(2);
    g[0] = x[0] - 1.0;
    g[1] = x[1] * x[1] - 4.0;
    return g;
  };
  VectorXd x0(2);
  x0 << 0.0, 1.0;
  const RootResult res = solve_root(f, x0);
  REQUIRE(res.converged);
  CHECK(res.x[0] == Catch::Approx(1.0).margin(1e-8));
  CHECK(res.x[1] == Catch::Approx(2.0).margin(1e-8));

  SECTION("an analytic Jacobian gives the same root and is stored") {
    const JacobianFn jac = [](const VectorXd& x) {
      MatrixXd j = MatrixXd::Zero(2, 2);
      j(0, 0) = 1.0;
      j(1, 1) = 2.0 * x[1];
      return j;
    };
    const RootResult res2 = solve_root(f, x0, SolverConfig{}, &jac);
    REQUIRE(res2.converged);
    CHECK(res2.x[1] == Catch::Approx(2.0).margin(1e-8));
    CHECK(res2.jacobian(1, 1) == Catch::Approx(4.0).epsilon(1e-6));
  }
}

TEST_CASE("solve_root: singular Jacobian takes the pseudo-inverse direction", "[solver]") {
  // Rank-1 consistent system; the minimum-norm Newton step lands on (1,1).
  const VectorFn f = [](const VectorXd& x) {
    VectorXd g(2);
    g[0] = x[0] + x[1] - 2.0;
    g[1] = 2.0 * (x[0] + x[1]) - 4.0;
    return g;
  };
  const RootResult res = solve_root(f, VectorXd::Zero(2));
  REQUIRE(res.converged);
  CHECK(res.used_pseudo_inverse);
  CHECK(res.x[0] == Catch::Approx(1.0).margin(1e-6));
  CHECK(res.x[1] == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("solve_root: rootless equation reports non-convergence", "[solver]") {
  const VectorFn f = [](const VectorXd& x) { return vec1(x[0] * x[0] + 1.0); };
  const RootResult res = solve_root(f, vec1(1.0));
  CHECK_FALSE(res.converged);
  CHECK(std::isfinite(res.g_norm));
  CHECK(res.g_norm >= 1.0);
  CHECK(std::isfinite(res.x[0]));
}

TEST_CASE("solve_root: non-finite start is a numeric error", "[solver]") {
  const VectorFn f = [](const VectorXd& x) { return vec1(std::sqrt(x[0])); };
  CHECK_THROWS_AS(solve_root(f, vec1(-1.0)), NumericError);
}

TEST_CASE("solve_root: step cap bounds each Newton move", "[solver]") {
  const VectorFn f = [](const VectorXd& x) { return vec1(x[0] - 100.0); };
  // Default cap 2.0: the affine problem takes exactly 50 capped steps.
  const RootResult capped = solve_root(f, vec1(0.0));
  REQUIRE(capped.converged);
  CHECK(capped.iterations == 50);
  // Cap disabled: one full Newton step.
  SolverConfig cfg;
  cfg.max_step = 0.0;
  const RootResult free_step = solve_root(f, vec1(0.0), cfg);
  REQUIRE(free_step.converged);
  CHECK(free_step.iterations == 1);
}

TEST_CASE("fd_jacobian matches the analytic derivative", "[solver]") {
  const VectorFn f = [](const VectorXd& x) {
    VectorXd g(2);
    g[0] = x[0] * x[0];
    g[1] = x[0] * x[1];
    return g;
  };
  VectorXd x(2);
  x << 1.5, -2.0;
  const MatrixXd j = fd_jacobian(f, x);
  CHECK(j(0, 0) == Catch::Approx(3.0).epsilon(1e-7));
  CHECK(j(0, 1) == Catch::Approx(0.0).margin(1e-7));
  CHECK(j(1, 0) == Catch::Approx(-2.0).epsilon(1e-7));
  CHECK(j(1, 1) == Catch::Approx(1.5).epsilon(1e-7));
}

TEST_CASE("two-step solve: refresh loop and acceptance radius", "[solver]") {
  const VectorFn eq_k0 = [](const VectorXd& x) { return vec1(2.0 - x[0]); };

  SECTION("augmented root within the radius is accepted") {
    const AugmentedEquationFactory factory = [](const VectorXd&) {
      return std::make_pair(VectorFn([](const VectorXd& x) { return vec1(2.5 - x[0]); }), JacobianFn{});
    };
    const AcceptanceRadiusFn radius = [](const RootResult&) { return vec1(1.0); };
    const TwoStepResult r = solve_phi_two_step(eq_k0, nullptr, vec1(0.0), factory, radius, TwoStepOptions{});
    CHECK(r.step1.converged);
    CHECK(r.step1.x[0] == Catch::Approx(2.0).margin(1e-8));
    CHECK(r.step2_attempted);
    CHECK(r.step2_accepted);
    CHECK(r.phi[0] == Catch::Approx(2.5).margin(1e-8));
    CHECK(r.refreshes == 2);  // one solve that moves, one that confirms
  }
  SECTION("augmented root outside the radius falls back to step 1") {
    const AugmentedEquationFactory factory = [](const VectorXd&) {
      return std::make_pair(VectorFn([](const VectorXd& x) { return vec1(2.5 - x[0]); }), JacobianFn{});
    };
    const AcceptanceRadiusFn radius = [](const RootResult&) { return vec1(0.1); };
    const TwoStepResult r = solve_phi_two_step(eq_k0, nullptr, vec1(0.0), factory, radius, TwoStepOptions{});
    CHECK(r.step2_attempted);
    CHECK_FALSE(r.step2_accepted);
    CHECK(r.phi[0] == Catch::Approx(2.0).margin(1e-8));
  }
  SECTION("refresh count is capped when the augmented root keeps moving") {
    const AugmentedEquationFactory factory = [](const VectorXd& phi_c) {
      const double target = phi_c[0] + 1.0;
      return std::make_pair(VectorFn([target](const VectorXd& x) { return vec1(target - x[0]); }), JacobianFn{});
    };
    TwoStepOptions opts;
    opts.max_refresh = 3;
    const TwoStepResult r = solve_phi_two_step(eq_k0, nullptr, vec1(0.0), factory, AcceptanceRadiusFn{}, opts);
    CHECK(r.refreshes == 3);
    CHECK(r.phi[0] == Catch::Approx(5.0).margin(1e-8));  // 2 -> 3 -> 4 -> 5
  }
  SECTION("step 2 is skipped when step 1 fails") {
    const VectorFn bad = [](const VectorXd& x) { return vec1(x[0] * x[0] + 1.0); };
    bool factory_called = false;
    const AugmentedEquationFactory factory = [&](const VectorXd&) {
      factory_called = true;
      return std::make_pair(VectorFn([](const VectorXd& x) { return vec1(-x[0]); }), JacobianFn{});
    };
    const TwoStepResult r = solve_phi_two_step(bad, nullptr, vec1(1.0), factory, AcceptanceRadiusFn{}, TwoStepOptions{});
    CHECK_FALSE(r.step1.converged);
    CHECK_FALSE(r.step2_attempted);
    CHECK_FALSE(factory_called);
  }
}

TEST_CASE("monotonicity diagnostic: definite vs rank-deficient systems", "[solver]") {
  MatrixXd A(2, 2);
  A << 2.0, 0.5, 0.5, 1.0;
  const VectorFn decreasing = [A](const VectorXd& phi) { return VectorXd(-A * phi); };

  SECTION("strictly decreasing system passes with the right eigenvalue") {
    std::vector<VectorXd> pts = {VectorXd::Zero(2)};
    VectorXd p2(2);
    p2 << 0.3, -0.2;
    pts.push_back(p2);
    const MonotonicityReport rep = monotonicity_diagnostic(decreasing, pts);
    CHECK(rep.pass);
    REQUIRE(rep.max_eigenvalues.size() == 2);
    const double lam_min = (3.0 - std::sqrt(2.0)) / 2.0;  // smallest eigenvalue of A
    CHECK(rep.worst_max_eigenvalue == Catch::Approx(-lam_min).epsilon(1e-5));
    CHECK(rep.notes.empty());
  }
  SECTION("rank-deficient Jacobian fails the strict-negativity band") {
    MatrixXd S(2, 2);
    S << 1.0, 1.0, 1.0, 1.0;  // rank 1: one eigenvalue exactly 0
    const VectorFn degenerate = [S](const VectorXd& phi) { return VectorXd(-S * phi); };
    const MonotonicityReport rep = monotonicity_diagnostic(degenerate, {VectorXd::Zero(2)});
    CHECK_FALSE(rep.pass);
    CHECK(rep.worst_max_eigenvalue > -1e-9);
  }
  SECTION("increasing system fails outright") {
    const VectorFn increasing = [](const VectorXd& phi) { return phi; };
    CHECK_FALSE(monotonicity_diagnostic(increasing, {vec1(0.5)}).pass);
  }
  SECTION("throwing equation is recorded per point, not propagated") {
    const VectorFn thrower = [](const VectorXd&) -> VectorXd { throw NumericError("boom"); };
    const MonotonicityReport rep = monotonicity_diagnostic(thrower, {vec1(0.0)});
    CHECK_FALSE(rep.pass);
    REQUIRE(rep.notes.size() == 1);
    CHECK(std::isnan(rep.max_eigenvalues[0]));
  }
  SECTION("seeded-draw overload is deterministic and respects radius 0") {
    const MonotonicityReport a = monotonicity_diagnostic(decreasing, VectorXd::Zero(2), 0.5, 5, 77);
    const MonotonicityReport b = monotonicity_diagnostic(decreasing, VectorXd::Zero(2), 0.5, 5, 77);
    CHECK(a.max_eigenvalues == b.max_eigenvalues);
    const MonotonicityReport c = monotonicity_diagnostic(decreasing, VectorXd::Zero(2), 0.0, 3, 1);
    for (double e : c.max_eigenvalues) CHECK(e == Catch::Approx(c.max_eigenvalues[0]).epsilon(1e-12));
    CHECK_THROWS_AS(monotonicity_diagnostic(decreasing, VectorXd::Zero(2), 0.5, 0, 1), ArgumentError);
    CHECK_THROWS_AS(monotonicity_diagnostic(decreasing, VectorXd::Zero(2), -0.1, 3, 1), ArgumentError);
    CHECK_THROWS_AS(monotonicity_diagnostic(decreasing, std::vector<VectorXd>{}), ArgumentError);
  }
}
