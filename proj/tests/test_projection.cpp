// Exact projections onto the two-stage tangent space on finite supports:
// closed-form values, orthogonality of the residual, idempotence, and the
// consistency of the restricted projection with the sub-efficient score.

#include "helpers.hpp"

#include <cmath>

#include "dualframe/projection.hpp"
#include "dualframe/rng.hpp"
#include "dualframe/scores.hpp"

using namespace dualframe;

namespace {

// Six points over three X-groups, rational masses and probabilities.
std::vector<SupportPoint> six_point_support() {
  std::vector<SupportPoint> pts;
  auto add = [&](double mass, int grp, double s, double pp, double h1, double h2, double h3) {
    SupportPoint p;
    p.mass = mass;
    p.x_group = grp;
    p.pi_np = s;
    p.pi_p = pp;
    p.h1 = h1;
    p.h2 = h2;
    p.h3 = h3;
    pts.push_back(p);
  };
  add(0.20, 7, 0.25, 0.50, 1.0, -0.5, 0.3);
  add(0.10, 7, 0.40, 0.50, -2.0, 0.7, 1.1);
  add(0.25, 2, 0.50, 0.20, 0.6, 0.6, -0.4);
  add(0.15, 2, 0.10, 0.20, 2.0, -1.0, 0.0);
  add(0.18, 5, 0.75, 0.60, -0.3, 0.2, 0.9);
  add(0.12, 5, 0.60, 0.60, 1.4, 1.4, 1.4);
  return pts;
}

double residual_value(const Lambda2Projection& proj, const std::vector<SupportPoint>& pts, size_t i,
                      TwoStagePattern pat) {
  return h_value(pts[i], pat) - proj_lambda2_value(proj, pts, i, pat);
}

double residual_tilde_value(const Lambda2Projection& proj, const std::vector<SupportPoint>& pts, size_t i,
                            TwoStagePattern pat) {
  return h_value(pts[i], pat) - proj_lambda2_tilde_value(proj, pts, i, pat);
}

}  // namespace

TEST_CASE("one-point oracle with pi_np = pi_p = 1/2 and h = (0,1,0)", "[projection]") {
  SupportPoint p;
  p.mass = 1.0;
  p.x_group = 0;
  p.pi_np = 0.5;
  p.pi_p = 0.5;
  p.h1 = 0.0;
  p.h2 = 1.0;
  p.h3 = 0.0;
  const Lambda2Projection proj = project_lambda2({p});
  REQUIRE(proj.g1_star.size() == 1);
  REQUIRE(proj.g3_star.size() == 1);
  CHECK(proj.g1_star[0] == Catch::Approx(0.5).epsilon(1e-14));
  CHECK(proj.g3_star[0] == Catch::Approx(-0.25).epsilon(1e-14));
  CHECK(proj.gt3_star[0] == Catch::Approx(-0.5).epsilon(1e-14));

  // The residual is orthogonal to both basis directions — this is what pins
  // the signs in the closed forms.
  const std::vector<SupportPoint> pts = {p};
  const double ip1 = support_inner_product(
      pts, [&](size_t i, TwoStagePattern pat) { return residual_value(proj, pts, i, pat); },
      [&](size_t i, TwoStagePattern pat) { return basis_e1(pts[i], pat); });
  const double ip3 = support_inner_product(
      pts, [&](size_t i, TwoStagePattern pat) { return residual_value(proj, pts, i, pat); },
      [&](size_t i, TwoStagePattern pat) { return basis_e3(pts[i], pat); });
  CHECK(ip1 == Catch::Approx(0.0).margin(1e-14));
  CHECK(ip3 == Catch::Approx(0.0).margin(1e-14));

  CHECK_THROWS_AS(project_lambda2({}), ArgumentError);
}

TEST_CASE("constant functions are orthogonal to the tangent space", "[projection]") {
  std::vector<SupportPoint> pts = six_point_support();
  for (auto& p : pts) {
    p.h1 = 2.7;
    p.h2 = 2.7;
    p.h3 = 2.7;
  }
  const Lambda2Projection proj = project_lambda2(pts);
  for (double v : proj.g1_star) CHECK(v == Catch::Approx(0.0).margin(1e-14));
  for (double v : proj.g3_star) CHECK(v == Catch::Approx(0.0).margin(1e-14));
  for (double v : proj.gt3_star) CHECK(v == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("orthogonality against random tangent elements", "[projection]") {
  const std::vector<SupportPoint> pts = six_point_support();
  const Lambda2Projection proj = project_lambda2(pts);
  const size_t n_groups = proj.g3_star.size();
  REQUIRE(n_groups == 3);

  Rng rng(424242);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> g1(pts.size()), g3(n_groups), gt3(n_groups);
    for (auto& v : g1) v = 2.0 * rng.uniform() - 1.0;
    for (auto& v : g3) v = 2.0 * rng.uniform() - 1.0;
    for (auto& v : gt3) v = 2.0 * rng.uniform() - 1.0;

    const double ip = support_inner_product(
        pts, [&](size_t i, TwoStagePattern pat) { return residual_value(proj, pts, i, pat); },
        [&](size_t i, TwoStagePattern pat) {
          const size_t g = static_cast<size_t>(proj.point_group[i]);
          return g1[i] * basis_e1(pts[i], pat) + g3[g] * basis_e3(pts[i], pat);
        });
    CAPTURE(trial);
    CHECK(ip == Catch::Approx(0.0).margin(1e-10));

    const double ipt = support_inner_product(
        pts, [&](size_t i, TwoStagePattern pat) { return residual_tilde_value(proj, pts, i, pat); },
        [&](size_t i, TwoStagePattern pat) {
          return gt3[static_cast<size_t>(proj.point_group[i])] * basis_etilde(pts[i], pat);
        });
    CHECK(ipt == Catch::Approx(0.0).margin(1e-10));
  }
}

TEST_CASE("projections are idempotent", "[projection]") {
  const std::vector<SupportPoint> pts = six_point_support();
  const Lambda2Projection proj = project_lambda2(pts);

  // Re-project the projection itself.
  std::vector<SupportPoint> again = pts;
  for (size_t i = 0; i < pts.size(); ++i) {
    again[i].h1 = proj_lambda2_value(proj, pts, i, TwoStagePattern::kNp);
    again[i].h2 = proj_lambda2_value(proj, pts, i, TwoStagePattern::kPOnly);
    again[i].h3 = proj_lambda2_value(proj, pts, i, TwoStagePattern::kNeither);
  }
  const Lambda2Projection proj2 = project_lambda2(again);
  for (size_t i = 0; i < pts.size(); ++i)
    CHECK(proj2.g1_star[i] == Catch::Approx(proj.g1_star[i]).margin(1e-10));
  for (size_t g = 0; g < proj.g3_star.size(); ++g)
    CHECK(proj2.g3_star[g] == Catch::Approx(proj.g3_star[g]).margin(1e-10));

  // Restricted analogue.
  std::vector<SupportPoint> tagain = pts;
  for (size_t i = 0; i < pts.size(); ++i) {
    tagain[i].h1 = proj_lambda2_tilde_value(proj, pts, i, TwoStagePattern::kNp);
    tagain[i].h2 = proj_lambda2_tilde_value(proj, pts, i, TwoStagePattern::kPOnly);
    tagain[i].h3 = proj_lambda2_tilde_value(proj, pts, i, TwoStagePattern::kNeither);
  }
  const Lambda2Projection tproj2 = project_lambda2(tagain);
  for (size_t g = 0; g < proj.gt3_star.size(); ++g)
    CHECK(tproj2.gt3_star[g] == Catch::Approx(proj.gt3_star[g]).margin(1e-10));
}

TEST_CASE("restricted projection residual is the sub-efficient score", "[projection]") {
  // Embed the inverse-weighted estimating function of the design that never
  // weights by the model: h = (U, U/pi_p, 0) per point. The residual after
  // projecting onto the restricted space must equal the sub-efficient score
  // with gtilde = -gt3*, pattern by pattern.
  std::vector<SupportPoint> pts;
  const std::vector<double> u_vals = {-2.0, 1.5, 0.4};
  const std::vector<double> masses = {0.5, 0.3, 0.2};
  const std::vector<double> s_vals = {0.3, 0.45, 0.2};  // pi_np varies with Y
  const double pp = 0.25;                               // pi_p is X-measurable: constant per group
  for (size_t j = 0; j < u_vals.size(); ++j) {
    SupportPoint p;
    p.mass = masses[j];
    p.x_group = 11;  // one X-group
    p.pi_np = s_vals[j];
    p.pi_p = pp;
    p.h1 = u_vals[j];
    p.h2 = u_vals[j] / pp;
    p.h3 = 0.0;
    pts.push_back(p);
  }
  const Lambda2Projection proj = project_lambda2(pts);
  REQUIRE(proj.gt3_star.size() == 1);
  const double gtilde = -proj.gt3_star[0];

  // gt3* has the explicit odds-weighted form -E[(1-pi_np)U | X]/E[1-pi_np | X]
  // when pi_p is constant given X.
  double num = 0.0, den = 0.0;
  for (size_t j = 0; j < pts.size(); ++j) {
    num += masses[j] * (1.0 - s_vals[j]) * u_vals[j];
    den += masses[j] * (1.0 - s_vals[j]);
  }
  CHECK(gtilde == Catch::Approx(num / den).epsilon(1e-13));

  VectorXd gt(1);
  gt[0] = gtilde;
  for (size_t j = 0; j < pts.size(); ++j) {
    VectorXd u(1);
    u[0] = u_vals[j];
    CAPTURE(j);
    CHECK(residual_tilde_value(proj, pts, j, TwoStagePattern::kNp) ==
          Catch::Approx(s_subeff_unit(1, 0, kNaN, &u, gt)[0]).epsilon(1e-12));
    CHECK(residual_tilde_value(proj, pts, j, TwoStagePattern::kPOnly) ==
          Catch::Approx(s_subeff_unit(0, 1, pp, &u, gt)[0]).epsilon(1e-12));
    CHECK(residual_tilde_value(proj, pts, j, TwoStagePattern::kNeither) ==
          Catch::Approx(s_subeff_unit(0, 0, kNaN, nullptr, gt)[0]).epsilon(1e-12));
  }
}
