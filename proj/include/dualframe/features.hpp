#pragma once

// Feature maps L = (X, Y) -> R^d, specified as token lists:
//   "1"        intercept
//   "y"        outcome
//   "<col>"    covariate by name (e.g. "x1")
//   "<col>^2"  squared covariate
//
// Used for the logistic sampling-model features V(L) (may involve y) and for
// the calibration functions g(X) / k(X) (must be X-only).

#include <string>
#include <vector>

#include "dualframe/common.hpp"
#include "dualframe/dataset.hpp"

namespace dualframe {

class FeatureMap {
 public:
  struct Term {
    enum Kind { kIntercept, kY, kColumn, kColumnSquared };
    Kind kind = kIntercept;
    int col = -1;
  };

  static FeatureMap parse(const std::vector<std::string>& tokens, const std::vector<std::string>& covariate_names) {
    FeatureMap fm;
    fm.tokens_ = tokens;
    for (const std::string& tok : tokens) {
      Term t;
      if (tok == "1") {
        t.kind = Term::kIntercept;
      } else if (tok == "y") {
        t.kind = Term::kY;
        fm.uses_y_ = true;
      } else {
        std::string base = tok;
        t.kind = Term::kColumn;
        if (tok.size() > 2 && tok.substr(tok.size() - 2) == "^2") {
          base = tok.substr(0, tok.size() - 2);
          t.kind = Term::kColumnSquared;
        }
        t.col = -1;
        for (size_t j = 0; j < covariate_names.size(); ++j)
          if (covariate_names[j] == base) t.col = static_cast<int>(j);
        if (t.col < 0) {
          std::string known = "1, y";
          for (const auto& n : covariate_names) known += ", " + n;
          throw ArgumentError("unknown feature token '" + tok + "' (known: " + known + ")");
        }
      }
      fm.terms_.push_back(t);
    }
    if (fm.terms_.empty()) throw ArgumentError("feature map needs at least one token");
    return fm;
  }

  int dim() const { return static_cast<int>(terms_.size()); }
  bool uses_y() const { return uses_y_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void evaluate(const UnitRecord& rec, VectorXd& out) const {
    out.resize(dim());
    for (int j = 0; j < dim(); ++j) {
      const Term& t = terms_[static_cast<size_t>(j)];
      switch (t.kind) {
        case Term::kIntercept:
          out[j] = 1.0;
          break;
        case Term::kY:
          if (is_missing(rec.y))
            throw EvalError("feature 'y' requires an observed outcome (unit id " + std::to_string(rec.id) + ")");
          out[j] = rec.y;
          break;
        case Term::kColumn:
          out[j] = rec.x[t.col];
          break;
        case Term::kColumnSquared:
          out[j] = rec.x[t.col] * rec.x[t.col];
          break;
      }
    }
  }

  VectorXd evaluate(const UnitRecord& rec) const {
    VectorXd out;
    evaluate(rec, out);
    return out;
  }

 private:
  std::vector<Term> terms_;
  std::vector<std::string> tokens_;
  bool uses_y_ = false;
};

// Calibration functions g(X), k(X) may not read the outcome.
inline void require_x_only(const FeatureMap& fm, const std::string& what) {
  if (fm.uses_y()) throw ArgumentError(what + " must be a function of the covariates only; token 'y' is not allowed");
}

// Default calibration features: first `dim` of [1, x1, ..., xp, x1^2, ..., xp^2].
inline std::vector<std::string> default_g_tokens(const std::vector<std::string>& covariate_names, int dim) {
  std::vector<std::string> pool = {"1"};
  for (const auto& n : covariate_names) pool.push_back(n);
  for (const auto& n : covariate_names) pool.push_back(n + "^2");
  if (dim < 1 || dim > static_cast<int>(pool.size()))
    throw ArgumentError("cannot build a default calibration basis of dimension " + std::to_string(dim) + " from " +
                        std::to_string(covariate_names.size()) + " covariates");
  pool.resize(static_cast<size_t>(dim));
  return pool;
}

}  // namespace dualframe
