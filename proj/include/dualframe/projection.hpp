#pragma once

// Exact projection formulas onto the two-stage nuisance tangent space and its
// restricted subspace, computed on finite supports. These serve as oracles
// for the score constructions: the efficient and sub-efficient scores are the
// residuals of inverse-weighted estimating functions after these projections,
// and the tests verify orthogonality and idempotence by exact summation.
//
// Setup (two-stage view): the non-probability draw happens first; a unit not
// selected there is then offered to the probability sample. Patterns and
// their conditional probabilities given L:
//     NP      : pi_np
//     (0,1)   : (1 - pi_np) pi_p
//     (0,0)   : (1 - pi_np)(1 - pi_p)
// A function h in H decomposes as
//     h = d_np h1(L) + (1-d_np) d_p h2(L) + (1-d_np)(1-d_p) h3(X).
// The tangent space is spanned by
//     e1 = (1 - d_np/pi_np) - (1-d_np)(1 - d_p/pi_p)   (coefficient g1(L))
//     e3 = (1 - d_np/pi_np)                            (coefficient g3(X))
// and the restricted subspace by
//     et = (1-d_np)(1 - d_p/pi_p)                      (coefficient gt3(X)).
//
// Closed forms (derived from the normal equations; the first numerator term
// of g3* and the sign of the gt3* numerator are corrected relative to a
// common misprint — orthogonality of the residual, checked exactly in the
// tests, pins these signs):
//     g3*  = E[ -(1-pi_np){h1 - pi_p h2 - (1-pi_p) h3}
//               - (h2 - h1)(1-pi_np) pi_p / pi_u | X ] / E[ O_u | X ]
//     g1*  = pi_p { pi_np (h2 - h1) - g3* } / pi_u
//     gt3* = E[ (1-pi_np)(1-pi_p)(h3 - h2) | X ] / E[ (1-pi_np)(1-pi_p)/pi_p | X ]
// with pi_u = pi_np + pi_p - pi_np pi_p and O_u = (1 - pi_u)/pi_u.

#include <vector>

#include "dualframe/common.hpp"
#include "dualframe/sampling_model.hpp"

namespace dualframe {

enum class TwoStagePattern { kNp, kPOnly, kNeither };

inline constexpr TwoStagePattern kAllPatterns[] = {TwoStagePattern::kNp, TwoStagePattern::kPOnly,
                                                   TwoStagePattern::kNeither};

struct SupportPoint {
  double mass = 1.0;  // P(L = this point); need not be normalized
  int x_group = 0;    // points sharing x_group share the same X value
  double pi_np = 0.5;
  double pi_p = 0.5;
  double h1 = 0.0, h2 = 0.0, h3 = 0.0;
};

inline double pattern_prob(const SupportPoint& p, TwoStagePattern pat) {
  switch (pat) {
    case TwoStagePattern::kNp:
      return p.pi_np;
    case TwoStagePattern::kPOnly:
      return (1.0 - p.pi_np) * p.pi_p;
    case TwoStagePattern::kNeither:
      return (1.0 - p.pi_np) * (1.0 - p.pi_p);
  }
  return 0.0;
}

inline double h_value(const SupportPoint& p, TwoStagePattern pat) {
  switch (pat) {
    case TwoStagePattern::kNp:
      return p.h1;
    case TwoStagePattern::kPOnly:
      return p.h2;
    case TwoStagePattern::kNeither:
      return p.h3;
  }
  return 0.0;
}

// Tangent-space basis elements evaluated per pattern.
inline double basis_e1(const SupportPoint& p, TwoStagePattern pat) {
  switch (pat) {
    case TwoStagePattern::kNp:
      return 1.0 - 1.0 / p.pi_np;
    case TwoStagePattern::kPOnly:
      return 1.0 / p.pi_p;  // 1 - (1 - 1/pi_p)
    case TwoStagePattern::kNeither:
      return 0.0;  // 1 - 1
  }
  return 0.0;
}
inline double basis_e3(const SupportPoint& p, TwoStagePattern pat) {
  return pat == TwoStagePattern::kNp ? 1.0 - 1.0 / p.pi_np : 1.0;
}
inline double basis_etilde(const SupportPoint& p, TwoStagePattern pat) {
  switch (pat) {
    case TwoStagePattern::kNp:
      return 0.0;
    case TwoStagePattern::kPOnly:
      return 1.0 - 1.0 / p.pi_p;
    case TwoStagePattern::kNeither:
      return 1.0;
  }
  return 0.0;
}

struct Lambda2Projection {
  std::vector<double> g1_star;      // per support point (function of L)
  std::vector<double> g3_star;      // per x_group (function of X)
  std::vector<double> gt3_star;     // per x_group (restricted projection)
  std::vector<int> point_group;     // x_group per point, compacted to 0..G-1
};

inline Lambda2Projection project_lambda2(const std::vector<SupportPoint>& pts) {
  if (pts.empty()) throw ArgumentError("project_lambda2: empty support");
  // Compact group ids.
  std::vector<int> groups;
  std::vector<int> point_group(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    int gid = -1;
    for (size_t g = 0; g < groups.size(); ++g)
      if (groups[g] == pts[i].x_group) gid = static_cast<int>(g);
    if (gid < 0) {
      gid = static_cast<int>(groups.size());
      groups.push_back(pts[i].x_group);
    }
    point_group[i] = gid;
  }
  const size_t n_groups = groups.size();
  std::vector<double> num3(n_groups, 0.0), den3(n_groups, 0.0);
  std::vector<double> numt(n_groups, 0.0), dent(n_groups, 0.0);
  for (size_t i = 0; i < pts.size(); ++i) {
    const SupportPoint& p = pts[i];
    const double pu = pi_union(p.pi_np, p.pi_p);
    const double o_u = (1.0 - pu) / pu;
    const double m = p.mass;
    const int g = point_group[i];
    num3[static_cast<size_t>(g)] += m * (-(1.0 - p.pi_np) * (p.h1 - p.pi_p * p.h2 - (1.0 - p.pi_p) * p.h3) -
                                         (p.h2 - p.h1) * (1.0 - p.pi_np) * p.pi_p / pu);
    den3[static_cast<size_t>(g)] += m * o_u;
    numt[static_cast<size_t>(g)] += m * (1.0 - p.pi_np) * (1.0 - p.pi_p) * (p.h3 - p.h2);
    dent[static_cast<size_t>(g)] += m * (1.0 - p.pi_np) * (1.0 - p.pi_p) / p.pi_p;
  }
  Lambda2Projection out;
  out.point_group = point_group;
  out.g3_star.resize(n_groups);
  out.gt3_star.resize(n_groups);
  for (size_t g = 0; g < n_groups; ++g) {
    out.g3_star[g] = num3[g] / den3[g];
    out.gt3_star[g] = numt[g] / dent[g];
  }
  out.g1_star.resize(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    const SupportPoint& p = pts[i];
    const double pu = pi_union(p.pi_np, p.pi_p);
    out.g1_star[i] =
        p.pi_p * (p.pi_np * (p.h2 - p.h1) - out.g3_star[static_cast<size_t>(point_group[i])]) / pu;
  }
  return out;
}

// Evaluate the projected functions per (point, pattern).
inline double proj_lambda2_value(const Lambda2Projection& proj, const std::vector<SupportPoint>& pts, size_t i,
                                 TwoStagePattern pat) {
  const SupportPoint& p = pts[i];
  const int g = proj.point_group[i];
  return proj.g1_star[i] * basis_e1(p, pat) + proj.g3_star[static_cast<size_t>(g)] * basis_e3(p, pat);
}
inline double proj_lambda2_tilde_value(const Lambda2Projection& proj, const std::vector<SupportPoint>& pts, size_t i,
                                       TwoStagePattern pat) {
  return proj.gt3_star[static_cast<size_t>(proj.point_group[i])] * basis_etilde(pts[i], pat);
}

// Exact inner product <f, g> = sum_points sum_patterns mass * P(pattern|L) f g.
template <typename F, typename G>
double support_inner_product(const std::vector<SupportPoint>& pts, F&& f, G&& g) {
  double acc = 0.0;
  for (size_t i = 0; i < pts.size(); ++i)
    for (TwoStagePattern pat : kAllPatterns)
      acc += pts[i].mass * pattern_prob(pts[i], pat) * f(i, pat) * g(i, pat);
  return acc;
}

}  // namespace dualframe
