#pragma once

// Shared numerics and error taxonomy for the dualframe library.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dualframe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
// Value outside its mathematical domain (e.g. a probability of 1.2).
struct DomainError : ValidationError {
  using ValidationError::ValidationError;
};
struct ArgumentError : Error {
  using Error::Error;
};
struct EvalError : Error {
  using Error::Error;
};
struct FitError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Small numeric helpers

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline bool is_missing(double v) { return std::isnan(v); }

// Compensated (Kahan) summation: estimating equations sum 1e4+ terms whose
// exact cancellation several tests assert at 1e-10.
class KahanSum {
 public:
  void add(double v) {
    const double t = s_ + v;
    if (std::abs(s_) >= std::abs(v))
      c_ += (s_ - t) + v;
    else
      c_ += (v - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

 private:
  double s_ = 0.0, c_ = 0.0;
};

class KahanVec {
 public:
  explicit KahanVec(int dim) : sums_(static_cast<size_t>(dim)) {}
  void add(const VectorXd& v) {
    for (int j = 0; j < v.size(); ++j) sums_[static_cast<size_t>(j)].add(v[j]);
  }
  VectorXd value() const {
    VectorXd out(static_cast<int>(sums_.size()));
    for (size_t j = 0; j < sums_.size(); ++j) out[static_cast<int>(j)] = sums_[j].value();
    return out;
  }

 private:
  std::vector<KahanSum> sums_;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw ArgumentError("median of empty set");
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid - 1), v.end());
  return 0.5 * (v[mid - 1] + hi);
}

// ---------------------------------------------------------------------------
// Standard normal quantile, Wichura's AS 241 (PPND16, ~1e-15 accuracy).
// Used for Wald intervals and for inverse-CDF normal sampling, so that
// reproducibility never depends on the standard library's unspecified
// normal_distribution algorithm.

inline double norm_quantile(double p) {
  if (std::isnan(p) || p < 0.0 || p > 1.0) throw ArgumentError("norm_quantile: p outside [0,1]");
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  if (p == 1.0) return std::numeric_limits<double>::infinity();

  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                 45921.953931549871457) *
                    r +
                13731.693765509461125) *
                   r +
               1971.5909503065514427) *
                  r +
              133.14166789178437745) *
                 r +
             3.387132872796366608) /
           (((((((5226.495278852545703 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                 21213.794301586595867) *
                    r +
                5394.1960214247511077) *
                   r +
               687.1870074920579083) *
                  r +
              42.313330701600911252) *
                 r +
             1.0);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) *
                  r +
              3.64784832476320460504) *
                 r +
             5.7694972214606914055) *
                r +
            4.6303378461565452959) *
               r +
           1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) *
                  r +
              0.68976733498510000455) *
                 r +
             1.6763848301838038494) *
                r +
            2.05319162663775882187) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) *
                  r +
              0.29656057182850489123) *
                 r +
             1.7848265399172913358) *
                r +
            5.4637849111641143699) *
               r +
           6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) *
                  r +
              0.0148753612908506148525) *
                 r +
             0.13692988092273580531) *
                r +
            0.59983220655588793769) *
               r +
           1.0);
  }
  return (q < 0.0) ? -val : val;
}

}  // namespace dualframe
