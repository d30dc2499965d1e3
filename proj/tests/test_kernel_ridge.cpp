// Kernel ridge regression against dense linear-algebra oracles: fixed-lambda
// fits, the GCV path, grouped category cells, and weight-in-the-loss fits.

#include "helpers.hpp"

#include <cmath>

#include "dualframe/kernel_ridge.hpp"
#include "dualframe/rng.hpp"

using namespace dualframe;

namespace {

XMatrix random_x(int n, int d, Rng& rng) {
  XMatrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = 2.0 * rng.uniform() - 1.0;
  return x;
}

VectorXd random_y(int n, Rng& rng) {
  VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.normal(0.0, 1.0);
  return y;
}

MatrixXd gaussian_kernel(const XMatrix& a, const XMatrix& b, double h) {
  MatrixXd k(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j)
      k(i, j) = std::exp(-(a.row(i) - b.row(j)).squaredNorm() / (2.0 * h * h));
  return k;
}

}  // namespace

TEST_CASE("median heuristic bandwidth", "[krr]") {
  XMatrix x(3, 1);
  x << 0.0, 1.0, 3.0;  // pairwise distances 1, 2, 3
  CHECK(median_heuristic_bandwidth(x) == 2.0);

  XMatrix same(4, 1);
  same << 5.0, 5.0, 5.0, 5.0;  // degenerate: all distances zero
  CHECK(median_heuristic_bandwidth(same) == 1.0);

  XMatrix one(1, 1);
  one << 0.0;
  CHECK(median_heuristic_bandwidth(one) == 1.0);
}

TEST_CASE("krr fixed-lambda fit matches the dense solve", "[krr]") {
  Rng rng(2024);
  const int n = 60;
  const XMatrix x = random_x(n, 2, rng);
  const VectorXd y = random_y(n, rng);
  const double lambda = 0.1;

  const KrrModel model = KrrModel::fit(x, y, lambda);
  const double h = model.bandwidth();

  // Independent dense solve of (K + lambda n I) alpha = y.
  const MatrixXd K = gaussian_kernel(x, x, h);
  const VectorXd alpha = (K + lambda * n * MatrixXd::Identity(n, n)).partialPivLu().solve(y);

  CHECK((model.dual_weights() - alpha).lpNorm<Eigen::Infinity>() < 1e-8);
  const VectorXd pred = model.predict(x);
  const VectorXd dense_pred = K * alpha;
  CHECK((pred - dense_pred).lpNorm<Eigen::Infinity>() < 1e-8);

  Rng rng2(7);
  const XMatrix xnew = random_x(10, 2, rng2);
  const VectorXd pnew = model.predict(xnew);
  const VectorXd dnew = gaussian_kernel(xnew, x, h) * alpha;
  CHECK((pnew - dnew).lpNorm<Eigen::Infinity>() < 1e-8);

  CHECK(model.lambda() == lambda);
  CHECK_THROWS_AS(KrrModel::fit(XMatrix(1, 1), VectorXd::Ones(1), 0.1), ArgumentError);
}

TEST_CASE("krr shrinkage on duplicated points is exact", "[krr]") {
  // Two identical rows with y = c: prediction at that point is c/(1+lambda),
  // so |pred - c| = c lambda / (1 + lambda).
  XMatrix x(2, 1);
  x << 0.7, 0.7;
  VectorXd y(2);
  y << 3.0, 3.0;
  const double lambda = 0.5;
  const KrrModel m = KrrModel::fit(x, y, lambda, 1.0);
  Eigen::RowVectorXd at(1);
  at << 0.7;
  CHECK(m.predict(at) == Catch::Approx(3.0 / 1.5).epsilon(1e-12));
  CHECK(std::abs(m.predict(at) - 3.0) <= 3.0 * lambda / (1.0 + lambda) + 1e-8);
}

TEST_CASE("krr nearly interpolates with a tiny penalty", "[krr]") {
  Rng rng(5);
  const int n = 50;
  XMatrix x(n, 1);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 4.0 * rng.uniform() - 2.0;
    y[i] = x(i, 0);
  }
  const KrrModel m = KrrModel::fit(x, y, 1e-6);
  const VectorXd pred = m.predict(x);
  double rmse = 0.0;
  for (int i = 0; i < n; ++i) rmse += (pred[i] - y[i]) * (pred[i] - y[i]);
  rmse = std::sqrt(rmse / n);
  CHECK(rmse < 1e-3);
}

TEST_CASE("gcv path: chosen lambda minimizes an independently computed curve", "[krr]") {
  Rng rng(99);
  const int n = 40;
  const XMatrix x = random_x(n, 1, rng);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = std::sin(3.0 * x(i, 0)) + rng.normal(0.0, 0.3);

  const KrrModel m = KrrModel::fit_gcv(x, y);
  const double h = m.bandwidth();
  const MatrixXd K = gaussian_kernel(x, x, h);

  double best_gcv = std::numeric_limits<double>::infinity();
  double best_lambda = kNaN;
  for (double lam : default_lambda_grid()) {
    const MatrixXd sys = K + lam * n * MatrixXd::Identity(n, n);
    const Eigen::PartialPivLU<MatrixXd> lu(sys);
    const VectorXd alpha = lu.solve(y);
    const VectorXd resid = y - K * alpha;
    const double rss = resid.squaredNorm();
    const double trs = (K * lu.inverse()).trace();
    const double denom = std::max(n - trs, 1e-12);
    const double gcv = rss * n / (denom * denom);
    if (gcv < best_gcv) {  // strict: ties keep the smaller lambda
      best_gcv = gcv;
      best_lambda = lam;
    }
  }
  CHECK(m.lambda() == Catch::Approx(best_lambda).epsilon(1e-12));

  SECTION("workspace fit_fixed equals the model fit, and guards hold") {
    KernelWorkspace ws(x, h);
    const KrrFit f = ws.fit_fixed(y, 0.01);
    const KrrModel mf = KrrModel::fit(x, y, 0.01, h);
    CHECK((f.alpha - mf.dual_weights()).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK_THROWS_AS(ws.fit_fixed(y, 0.0), ArgumentError);
    CHECK_THROWS_AS(ws.fit_fixed(VectorXd::Ones(3), 0.1), ArgumentError);
    // Degenerate tie-break: a constant grid returns that lambda.
    const KrrFit tied = ws.fit(y, {0.25, 0.25, 0.25});
    CHECK(tied.lambda == 0.25);
  }
  SECTION("mean learner wraps fit_gcv") {
    const MeanPredictor pred = krr_mean_learner()(x, y);
    Eigen::RowVectorXd probe(1);
    probe << 0.3;
    CHECK(pred(probe) == Catch::Approx(m.predict(probe)).epsilon(1e-12));
  }
}

TEST_CASE("grouped workspace: cells, pooling, and unseen combinations", "[krr]") {
  Rng rng(17);
  const int n = 60;
  XMatrix x(n, 2);
  VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 2.0 * rng.uniform() - 1.0;
    x(i, 1) = (i % 2 == 0) ? 0.0 : 1.0;
    y[i] = (x(i, 1) == 1.0 ? 2.0 : -1.0) + 0.5 * x(i, 0) + rng.normal(0.0, 0.2);
  }

  SECTION("per-cell fits equal standalone fits on the subsets") {
    KrrOptions opts;
    opts.min_cell_rows = 5;
    const GroupedWorkspace gw(x, {1}, opts);
    CHECK(gw.n_cells() == 2);
    CHECK_FALSE(gw.pooled());
    const auto fit = gw.fit(y);
    REQUIRE(fit.per_cell.size() == 2);

    // Rebuild each cell by hand: rows with the matching binary value.
    for (double b : {0.0, 1.0}) {
      std::vector<int> rows;
      for (int i = 0; i < n; ++i)
        if (x(i, 1) == b) rows.push_back(i);
      XMatrix sub(static_cast<int>(rows.size()), 1);
      VectorXd suby(static_cast<int>(rows.size()));
      for (size_t r = 0; r < rows.size(); ++r) {
        sub(static_cast<int>(r), 0) = x(rows[r], 0);
        suby[static_cast<int>(r)] = y[rows[r]];
      }
      const KrrModel standalone = KrrModel::fit_gcv(sub, suby);
      // Predict through the grouped machinery at the training points.
      const auto ctx = gw.cross(x);
      const VectorXd pred = gw.predict(ctx, fit);
      const VectorXd ref = standalone.predict(sub);
      for (size_t r = 0; r < rows.size(); ++r)
        CHECK(pred[rows[r]] == Catch::Approx(ref[static_cast<int>(r)]).margin(1e-10));
    }
  }
  SECTION("small cells force one pooled lambda") {
    KrrOptions opts;
    opts.min_cell_rows = 40;  // both 30-row cells are below this
    const GroupedWorkspace gw(x, {1}, opts);
    CHECK(gw.pooled());
    const auto fit = gw.fit(y);
    CHECK(fit.pooled);
    REQUIRE(fit.per_cell.size() == 2);
    CHECK(fit.per_cell[0].lambda == fit.per_cell[1].lambda);
  }
  SECTION("unseen binary combination predicts the fallback mean") {
    // Train only on binary = 0 rows.
    std::vector<int> rows;
    for (int i = 0; i < n; ++i)
      if (x(i, 1) == 0.0) rows.push_back(i);
    XMatrix x0(static_cast<int>(rows.size()), 2);
    VectorXd y0(static_cast<int>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
      x0.row(static_cast<int>(r)) = x.row(rows[r]);
      y0[static_cast<int>(r)] = y[rows[r]];
    }
    KrrOptions opts;
    opts.min_cell_rows = 2;
    const GroupedWorkspace gw(x0, {1}, opts);
    CHECK(gw.n_cells() == 1);
    const auto fit = gw.fit(y0);
    XMatrix probe(1, 2);
    probe << 0.3, 1.0;  // binary value never seen in training
    const auto ctx = gw.cross(probe);
    CHECK(ctx.pred_cell[0] == -1);
    CHECK(gw.predict(ctx, fit)[0] == Catch::Approx(y0.mean()).epsilon(1e-12));
  }
  SECTION("no binary columns means a single cell") {
    const GroupedWorkspace gw(x, {});
    CHECK(gw.n_cells() == 1);
  }
}

TEST_CASE("weighted fits: dense oracle, unit weights, shared-lambda refits", "[krr]") {
  Rng rng(31);
  const int n = 50;
  const XMatrix x = random_x(n, 1, rng);
  const VectorXd y = random_y(n, rng);
  const GroupedWorkspace gw(x, {});

  SECTION("unit weights reproduce the unweighted fit exactly") {
    const auto sys = gw.weighted(VectorXd::Ones(n));
    CHECK(sys.n_positive == n);
    CHECK(sys.weight_sum == Catch::Approx(double(n)).epsilon(1e-15));
    const auto wfit = gw.fit_weighted(sys, y);
    const auto ufit = gw.fit(y);
    REQUIRE(wfit.per_cell.size() == 1);
    CHECK(wfit.per_cell[0].lambda == ufit.per_cell[0].lambda);
    CHECK((wfit.per_cell[0].alpha - ufit.per_cell[0].alpha).lpNorm<Eigen::Infinity>() < 1e-10);
  }
  SECTION("general weights match the dense weighted system") {
    VectorXd w(n);
    for (int i = 0; i < n; ++i) w[i] = (i % 7 == 0) ? 0.0 : rng.uniform() + 0.1;
    const auto sys = gw.weighted(w);
    const auto fit = gw.fit_weighted(sys, y);
    const double lambda = fit.per_cell[0].lambda;

    // Dense: beta = D (D K D + lambda n I)^{-1} D y, predictions K_cross beta.
    const KernelWorkspace plain(x, 0.0);
    const MatrixXd K = gaussian_kernel(x, x, plain.bandwidth());
    const MatrixXd D = w.cwiseSqrt().asDiagonal();
    const MatrixXd M = D * K * D + lambda * n * MatrixXd::Identity(n, n);
    const VectorXd beta = D * M.partialPivLu().solve(D * y);

    const auto ctx = gw.cross(x);
    const VectorXd pred = gw.predict(ctx, fit);
    const VectorXd dense_pred = K * beta;
    CHECK((pred - dense_pred).lpNorm<Eigen::Infinity>() < 1e-8);

    SECTION("zero-weight rows do not influence the fit") {
      VectorXd y2 = y;
      for (int i = 0; i < n; i += 7) y2[i] += 100.0;  // perturb only zero-weight rows
      const auto fit2 = gw.fit_weighted_like(sys, y2, fit);
      const VectorXd pred2 = gw.predict(ctx, fit2);
      CHECK((pred2 - pred).lpNorm<Eigen::Infinity>() < 1e-8);
    }
  }
  SECTION("fit_weighted_like shares lambda and is exactly affine") {
    VectorXd w(n);
    for (int i = 0; i < n; ++i) w[i] = rng.uniform() + 0.05;
    const auto sys = gw.weighted(w);
    const auto ref = gw.fit_weighted(sys, y);

    const VectorXd ones = VectorXd::Ones(n);
    const auto fit_ones = gw.fit_weighted_like(sys, ones, ref);
    CHECK(fit_ones.per_cell[0].lambda == ref.per_cell[0].lambda);

    const double theta = 1.7;
    const VectorXd target = theta * ones + y;
    const auto fit_affine = gw.fit_weighted_like(sys, target, ref);
    const auto fit_y = gw.fit_weighted_like(sys, y, ref);
    const auto ctx = gw.cross(x);
    const VectorXd combined = theta * gw.predict(ctx, fit_ones) + gw.predict(ctx, fit_y);
    const VectorXd direct = gw.predict(ctx, fit_affine);
    CHECK((direct - combined).lpNorm<Eigen::Infinity>() < 1e-10);
  }
  SECTION("guards") {
    CHECK_THROWS_AS(gw.weighted(VectorXd::Constant(n, -1.0)), ArgumentError);
    CHECK_THROWS_AS(gw.weighted(VectorXd::Ones(3)), ArgumentError);
    VectorXd one_pos = VectorXd::Zero(n);
    one_pos[0] = 1.0;
    const auto degenerate = gw.weighted(one_pos);
    CHECK(degenerate.n_positive == 1);
    CHECK_THROWS_AS(gw.fit_weighted(degenerate, y), FitError);
  }
}
