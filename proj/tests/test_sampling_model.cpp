// Feature maps, the truncated logistic sampling model, union probabilities,
// and the working pi_bar machinery.

#include "helpers.hpp"

#include <cmath>

#include "dualframe/sampling_model.hpp"

using namespace dualframe;
using testutil::make_ds;
using testutil::NA;
using Catch::Matchers::ContainsSubstring;

namespace {
DualFrameDataset toy() {
  return make_ds({1, 2, 3, 4}, {1, 1, 0, 0}, {1, 0, 1, 0}, {0.2, NA, 0.5, NA}, {1.0, 2.0, 3.0, NA},
                 {0.5, -1.0, 2.0, 0.0}, 1);
}
}  // namespace

TEST_CASE("feature maps evaluate token lists against records", "[features]") {
  const DualFrameDataset ds = toy();
  const FeatureMap fm = FeatureMap::parse({"1", "x1", "y", "x1^2"}, ds.covariate_names);
  CHECK(fm.dim() == 4);
  CHECK(fm.uses_y());

  const VectorXd v = fm.evaluate(ds.record(0));  // x1 = 0.5, y = 1
  CHECK(v[0] == 1.0);
  CHECK(v[1] == 0.5);
  CHECK(v[2] == 1.0);
  CHECK(v[3] == 0.25);

  // Reading y off a (0,0) record is an evaluation error naming the unit.
  CHECK_THROWS_MATCHES(fm.evaluate(ds.record(3)), EvalError,
                       Catch::Matchers::MessageMatches(ContainsSubstring("id 4")));

  const FeatureMap xonly = FeatureMap::parse({"1", "x1"}, ds.covariate_names);
  CHECK_FALSE(xonly.uses_y());
  CHECK_NOTHROW(xonly.evaluate(ds.record(3)));
  CHECK_NOTHROW(require_x_only(xonly, "calibration features"));
  CHECK_THROWS_MATCHES(require_x_only(fm, "calibration features"), ArgumentError,
                       Catch::Matchers::MessageMatches(ContainsSubstring("covariates only")));

  CHECK_THROWS_MATCHES(FeatureMap::parse({"1", "bogus"}, ds.covariate_names), ArgumentError,
                       Catch::Matchers::MessageMatches(ContainsSubstring("bogus")));
  CHECK_THROWS_AS(FeatureMap::parse({}, ds.covariate_names), ArgumentError);

  CHECK(default_g_tokens({"x1"}, 3) == std::vector<std::string>{"1", "x1", "x1^2"});
  CHECK(default_g_tokens({"x1", "x2"}, 4) == std::vector<std::string>{"1", "x1", "x2", "x1^2"});
  CHECK_THROWS_AS(default_g_tokens({"x1"}, 4), ArgumentError);
  CHECK_THROWS_AS(default_g_tokens({"x1"}, 0), ArgumentError);
}

TEST_CASE("logistic model: probabilities, truncation, gradients", "[sampling_model]") {
  const DualFrameDataset ds = toy();
  const FeatureMap fm = FeatureMap::parse({"1", "x1"}, ds.covariate_names);

  VectorXd phi(2);
  phi << -2.15, 0.0;
  const LogisticSamplingModel m(phi, fm);
  CHECK(m.dim() == 2);
  CHECK(m.eps() == 1e-3);
  CHECK(m.pi_np(ds.record(0)) == Catch::Approx(0.10433122311900131).epsilon(1e-15));

  const auto e = m.eval(ds.record(0));
  CHECK_FALSE(e.clipped);
  CHECK(e.grad_scale() == Catch::Approx(e.p * (1.0 - e.p)).epsilon(1e-15));
  const VectorXd g = m.dpi_np(ds.record(0));
  CHECK(g[0] == Catch::Approx(e.p * (1.0 - e.p)).epsilon(1e-14));
  CHECK(g[1] == Catch::Approx(e.p * (1.0 - e.p) * 0.5).epsilon(1e-14));

  SECTION("truncation clips to [eps, 1-eps] and zeroes the gradient") {
    VectorXd low(2);
    low << -40.0, 0.0;
    const LogisticSamplingModel ml(low, fm, 1e-3);
    const auto el = ml.eval(ds.record(0));
    CHECK(el.p == 1e-3);
    CHECK(el.clipped);
    CHECK(el.grad_scale() == 0.0);
    CHECK(ml.dpi_np(ds.record(0)).norm() == 0.0);

    VectorXd high(2);
    high << 40.0, 0.0;
    const LogisticSamplingModel mh(high, fm, 1e-3);
    CHECK(mh.eval(ds.record(0)).p == 1.0 - 1e-3);
  }

  SECTION("constructor and with_phi guard dimensions") {
    VectorXd wrong(3);
    wrong << 1, 2, 3;
    CHECK_THROWS_AS(LogisticSamplingModel(wrong, fm), ArgumentError);
    CHECK_THROWS_AS(m.with_phi(wrong), ArgumentError);
    CHECK_THROWS_AS(LogisticSamplingModel(phi, fm, 0.0), ArgumentError);
    CHECK_THROWS_AS(LogisticSamplingModel(phi, fm, 0.5), ArgumentError);

    VectorXd phi2(2);
    phi2 << 0.0, 1.0;
    const LogisticSamplingModel m2 = m.with_phi(phi2);
    CHECK(m2.pi_np(ds.record(0)) == Catch::Approx(expit(0.5)).epsilon(1e-15));
    CHECK(m.pi_np(ds.record(0)) == Catch::Approx(0.10433122311900131).epsilon(1e-15));  // original unchanged
  }
}

TEST_CASE("union probability by inclusion-exclusion", "[sampling_model]") {
  CHECK(pi_union(0.1, 0.25) == Catch::Approx(0.325).epsilon(1e-15));
  CHECK(pi_union(expit(-2.15), expit(-3.0)) == Catch::Approx(0.1468090969404659).epsilon(1e-14));
  CHECK(pi_union(1.0, 0.3) == 1.0);
  CHECK(pi_union(0.0, 0.3) == Catch::Approx(0.3).epsilon(1e-15));
  // Symmetric and never below either marginal.
  CHECK(pi_union(0.2, 0.7) == pi_union(0.7, 0.2));
  CHECK(pi_union(0.2, 0.7) >= 0.7);
}

TEST_CASE("pi_bar: harmonic-mean working probability", "[sampling_model]") {
  const DualFrameDataset ds = toy();  // observed pi_p: 0.2 and 0.5

  // E(1/pi) = (5 + 2) / 2 = 3.5, so pi_bar = 2/7 everywhere.
  const PiBarModel pb = fit_pi_bar(ds, constant_mean_learner());
  CHECK(pb.fitted());
  CHECK(pb.predict(ds.x_row(1)) == Catch::Approx(2.0 / 7.0).epsilon(1e-15));

  SECTION("inverse-mean fits below 1 clamp to a probability of 1") {
    const PiBarModel clamped([](const Eigen::RowVectorXd&) { return 0.5; });
    CHECK(clamped.predict(ds.x_row(0)) == 1.0);
  }
  SECTION("unfitted model throws") {
    const PiBarModel empty;
    CHECK_FALSE(empty.fitted());
    CHECK_THROWS_AS(empty.predict(ds.x_row(0)), FitError);
  }
  SECTION("needs two probability-sample records") {
    DualFrameDataset one = make_ds({1, 2, 3}, {1, 1, 0}, {1, 0, 0}, {0.2, NA, NA}, {1.0, 2.0, NA},
                                   {0.5, -1.0, 2.0}, 1);
    CHECK_THROWS_MATCHES(fit_pi_bar(one, constant_mean_learner()), FitError,
                         Catch::Matchers::MessageMatches(ContainsSubstring("at least 2")));
  }
  SECTION("training_rows restricts the fit") {
    // Restricting to rows {0, 2} keeps both P records: same fit as full data.
    std::vector<int> rows = {0, 2};
    const PiBarModel sub = fit_pi_bar(ds, constant_mean_learner(), &rows);
    CHECK(sub.predict(ds.x_row(0)) == Catch::Approx(2.0 / 7.0).epsilon(1e-15));
    // Restricting to a single P record is an error.
    std::vector<int> narrow = {0, 1, 3};
    CHECK_THROWS_AS(fit_pi_bar(ds, constant_mean_learner(), &narrow), FitError);
  }
}

TEST_CASE("working_pi_union prefers the observed pi_p", "[sampling_model]") {
  const DualFrameDataset ds = toy();
  const FeatureMap fm = FeatureMap::parse({"1"}, ds.covariate_names);
  VectorXd phi(1);
  phi << std::log(0.4 / 0.6);  // pi_np = 0.4 for every unit
  const LogisticSamplingModel m(phi, fm);
  const PiBarModel pb = fit_pi_bar(ds, constant_mean_learner());  // 2/7

  // Row 0 has delta_p = 1, pi_p = 0.2: exact union 0.4 + 0.2 - 0.08 = 0.52.
  CHECK(working_pi_union(m, pb, ds, 0) == Catch::Approx(0.52).epsilon(1e-14));
  // Row 1 has delta_p = 0: the fitted 2/7 stands in for pi_p.
  const double expect = 0.4 + 2.0 / 7.0 - 0.4 * (2.0 / 7.0);
  CHECK(working_pi_union(m, pb, ds, 1) == Catch::Approx(expect).epsilon(1e-14));
}
