// Sandwich covariances, Wald intervals, Monte Carlo summaries, and the
// paired jackknife for SD gaps.

#include "helpers.hpp"

#include <cmath>

#include "dualframe/inference.hpp"

using namespace dualframe;

TEST_CASE("sandwich covariance: iid-mean reduction and pseudo-inverse fallback", "[inference]") {
  // Scalar estimating equation mean(theta - y) = 0: J = 1, Omega = Var(y),
  // so the sandwich is Var(y)/n — the textbook variance of a sample mean.
  const std::vector<double> y = {1.0, 4.0, 2.5, 0.5, 3.0, 2.0};
  const double n = static_cast<double>(y.size());
  const double mean = sample_mean(y);
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= n;  // Omega is a population-style mean of squared scores
  MatrixXd J = MatrixXd::Identity(1, 1);
  MatrixXd Omega(1, 1);
  Omega(0, 0) = var;
  const MatrixXd cov = sandwich_covariance(J, Omega, n);
  CHECK(cov(0, 0) == Catch::Approx(var / n).epsilon(1e-14));

  // Same thing through the per-unit score matrix convenience.
  MatrixXd scores(static_cast<int>(n), 1);
  for (int i = 0; i < scores.rows(); ++i) scores(i, 0) = y[static_cast<size_t>(i)] - mean;
  const MatrixXd cov2 = sandwich_from_scores(scores, J);
  CHECK(cov2(0, 0) == Catch::Approx(var / n).epsilon(1e-12));

  SECTION("2x2 with a non-trivial Jacobian") {
    MatrixXd J2(2, 2), O2(2, 2);
    J2 << 2.0, 1.0, 0.0, 4.0;
    O2 << 1.0, 0.3, 0.3, 2.0;
    const MatrixXd c = sandwich_covariance(J2, O2, 10.0);
    const MatrixXd jinv = J2.inverse();
    const MatrixXd expect = jinv * O2 * jinv.transpose() / 10.0;
    CHECK((c - expect).norm() < 1e-13);
    CHECK(c(0, 1) == c(1, 0));  // symmetrized
  }
  SECTION("singular Jacobian falls back to the pseudo-inverse") {
    MatrixXd Js = MatrixXd::Zero(2, 2);
    Js(0, 0) = 1.0;  // rank 1
    MatrixXd Os = MatrixXd::Identity(2, 2);
    MatrixXd c;
    CHECK_NOTHROW(c = sandwich_covariance(Js, Os, 5.0));
    CHECK(std::isfinite(c(0, 0)));
    CHECK(c(0, 0) == Catch::Approx(0.2).epsilon(1e-12));
  }
  SECTION("argument guards") {
    CHECK_THROWS_AS(sandwich_covariance(MatrixXd::Zero(2, 3), MatrixXd::Zero(2, 2), 5.0), ArgumentError);
    CHECK_THROWS_AS(sandwich_covariance(MatrixXd::Identity(2, 2), MatrixXd::Zero(3, 3), 5.0), ArgumentError);
    CHECK_THROWS_AS(sandwich_covariance(MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1), 0.0), ArgumentError);
    CHECK_THROWS_AS(sandwich_from_scores(MatrixXd::Zero(0, 1), MatrixXd::Identity(1, 1)), ArgumentError);
  }
}

TEST_CASE("wald intervals use the exact normal quantile", "[inference]") {
  const ConfInterval ci = wald_interval(0.0, 1.0, 0.05);
  CHECK(ci.lo == Catch::Approx(-1.9599639845400536).epsilon(1e-12));
  CHECK(ci.hi == Catch::Approx(1.9599639845400536).epsilon(1e-12));

  // Level 0.5: half-width is the 0.75 quantile, 0.6744897501960817.
  const ConfInterval half = wald_interval(2.0, 3.0, 0.5);
  CHECK(half.hi - 2.0 == Catch::Approx(3.0 * 0.6744897501960817).epsilon(1e-12));
  CHECK(2.0 - half.lo == Catch::Approx(3.0 * 0.6744897501960817).epsilon(1e-12));

  CHECK_THROWS_AS(wald_interval(0.0, 1.0, 0.0), ArgumentError);
  CHECK_THROWS_AS(wald_interval(0.0, 1.0, 1.0), ArgumentError);
}

TEST_CASE("sample moments", "[inference]") {
  CHECK(sample_mean({1.0, 2.0, 6.0}) == 3.0);
  CHECK(sample_sd({1.0, 2.0, 3.0, 4.0}) == Catch::Approx(1.2909944487358056).epsilon(1e-14));
  CHECK_THROWS_AS(sample_mean({}), ArgumentError);
  CHECK_THROWS_AS(sample_sd({1.0}), ArgumentError);
}

TEST_CASE("mc_summary: frozen example and the rmse decomposition", "[inference]") {
  const std::vector<double> est = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> ses = {1.0, 1.0, 1.0, 1.0};
  const McSummary s = mc_summary(est, ses, 2.0);
  CHECK(s.n_total == 4);
  CHECK(s.n_used == 4);
  CHECK(s.mean == 2.5);
  CHECK(s.bias == 0.5);
  CHECK(s.sd == Catch::Approx(1.2909944487358056).epsilon(1e-14));
  CHECK(s.rmse == Catch::Approx(1.224744871391589).epsilon(1e-14));
  CHECK(s.mean_se == 1.0);
  CHECK(s.coverage == 0.75);  // |4 - 2| = 2 > 1.96, the rest covered

  // RMSE^2 = bias^2 + SD^2 (R-1)/R, exactly.
  const double r = static_cast<double>(s.n_used);
  CHECK(s.rmse * s.rmse ==
        Catch::Approx(s.bias * s.bias + s.sd * s.sd * (r - 1.0) / r).epsilon(1e-12));

  SECTION("non-finite pairs are dropped from every statistic") {
    std::vector<double> est2 = est, ses2 = ses;
    est2.push_back(kNaN);
    ses2.push_back(1.0);
    est2.push_back(7.0);
    ses2.push_back(kNaN);
    const McSummary s2 = mc_summary(est2, ses2, 2.0);
    CHECK(s2.n_total == 6);
    CHECK(s2.n_used == 4);
    CHECK(s2.mean == s.mean);
    CHECK(s2.sd == s.sd);
    CHECK(s2.rmse == s.rmse);
    CHECK(s2.coverage == s.coverage);
  }
  SECTION("huge common offsets do not destroy the bias") {
    const double base = 1e15;
    const McSummary big = mc_summary({base, base + 1.0, base + 2.0}, {1.0, 1.0, 1.0}, base + 1.0);
    CHECK(big.mean == base + 1.0);
    CHECK(big.bias == 0.0);
  }
  SECTION("degenerate inputs") {
    const McSummary none = mc_summary({kNaN}, {kNaN}, 0.0);
    CHECK(none.n_used == 0);
    CHECK(std::isnan(none.mean));
    CHECK_THROWS_AS(mc_summary({1.0}, {1.0, 2.0}, 0.0), ArgumentError);
    // Coverage respects the requested level.
    const McSummary wide = mc_summary({1.0}, {10.0}, 0.0, 0.5);
    CHECK(wide.coverage == 1.0);
    const McSummary narrow = mc_summary({1.0}, {0.1}, 0.0, 0.5);
    CHECK(narrow.coverage == 0.0);
  }
}

TEST_CASE("jackknife sd gap: zero, analytic replication, and guards", "[inference]") {
  const std::vector<double> a = {0.4, -1.2, 0.8, 2.0, -0.6};
  SECTION("identical series have gap 0 with se 0") {
    const SdGap g = jackknife_sd_gap(a, a);
    CHECK(g.gap == 0.0);
    CHECK(g.se == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("matches an independent re-computation") {
    const std::vector<double> b = {1.0, 0.2, -0.3, 0.5, 0.1};
    const SdGap g = jackknife_sd_gap(a, b);
    CHECK(g.gap == Catch::Approx(sample_sd(a) - sample_sd(b)).epsilon(1e-14));

    const size_t n = a.size();
    std::vector<double> loo;
    for (size_t i = 0; i < n; ++i) {
      std::vector<double> ar, br;
      for (size_t j = 0; j < n; ++j)
        if (j != i) {
          ar.push_back(a[j]);
          br.push_back(b[j]);
        }
      loo.push_back(sample_sd(ar) - sample_sd(br));
    }
    const double m = sample_mean(loo);
    double acc = 0.0;
    for (double v : loo) acc += (v - m) * (v - m);
    const double se = std::sqrt(acc * static_cast<double>(n - 1) / static_cast<double>(n));
    CHECK(g.se == Catch::Approx(se).epsilon(1e-12));
  }
  SECTION("guards") {
    CHECK_THROWS_AS(jackknife_sd_gap(a, {1.0, 2.0}), ArgumentError);
    CHECK_THROWS_AS(jackknife_sd_gap({1.0, 2.0}, {1.0, 2.0}), ArgumentError);
  }
}
