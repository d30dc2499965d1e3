#pragma once

// Gaussian-kernel ridge regression with a median-heuristic bandwidth and
// ridge penalty chosen by generalized cross-validation (GCV) over a fixed
// log-grid.
//
// The expensive object is the eigendecomposition of the training kernel
// matrix. It depends only on the training rows and the bandwidth, so one
// KernelWorkspace is shared by every regression on the same rows: after the
// one-time O(n^3) factorization, each (target, lambda) costs O(n^2) and the
// whole GCV grid costs O(n * grid) extra. Cross-fitted nuisance estimation
// re-fits many targets on the same training rows, which makes this sharing
// the difference between minutes and hours per replication.
//
// Mixed covariates: binary columns induce category cells, fitted separately
// when every cell is large enough, and otherwise tied together as one
// block-diagonal system (Gaussian kernel on continuous columns times an
// indicator kernel on binary columns) with a single GCV-pooled lambda.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dualframe/common.hpp"
#include "dualframe/dataset.hpp"
#include "dualframe/sampling_model.hpp"

#if defined(DUALFRAME_USE_LAPACK)
extern "C" {
void dsyevd_(const char* jobz, const char* uplo, const int* n, double* a, const int* lda, double* w, double* work,
             const int* lwork, int* iwork, const int* liwork, int* info);
}
#endif

namespace dualframe {

struct KrrOptions {
  std::vector<double> lambda_grid;  // empty -> default grid
  double bandwidth = 0.0;           // <= 0 -> median heuristic
  int min_cell_rows = 20;           // category cells below this size force the pooled block fit
};

inline std::vector<double> default_lambda_grid() {
  // 9 points, half-decade spacing, 1e-4 .. 1
  std::vector<double> g;
  for (int k = 0; k <= 8; ++k) g.push_back(std::pow(10.0, -4.0 + 0.5 * k));
  return g;
}

struct KrrFit {
  VectorXd alpha;
  double lambda = 0.0;
};

namespace detail {

// Symmetric eigendecomposition, eigenvalues ascending. LAPACK's divide and
// conquer routine when available (measurably faster for n ~ 1e3), Eigen
// otherwise.
inline void sym_eig(MatrixXd a, VectorXd& values, MatrixXd& vectors) {
  const int n = static_cast<int>(a.rows());
  values.resize(n);
#if defined(DUALFRAME_USE_LAPACK)
  vectors = std::move(a);
  int info = 0;
  int lwork = -1, liwork = -1;
  double work_query = 0.0;
  int iwork_query = 0;
  dsyevd_("V", "L", &n, vectors.data(), &n, values.data(), &work_query, &lwork, &iwork_query, &liwork, &info);
  if (info != 0) throw NumericError("eigendecomposition workspace query failed");
  lwork = static_cast<int>(work_query);
  liwork = iwork_query;
  std::vector<double> work(static_cast<size_t>(lwork));
  std::vector<int> iwork(static_cast<size_t>(liwork));
  dsyevd_("V", "L", &n, vectors.data(), &n, values.data(), work.data(), &lwork, iwork.data(), &liwork, &info);
  if (info != 0) throw NumericError("eigendecomposition failed (info=" + std::to_string(info) + ")");
#else
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
  values = es.eigenvalues();
  vectors = es.eigenvectors();
#endif
}

// Ridge formulas in spectral coordinates: with system matrix A = Q D Q^T and
// response coordinates z = Q^T y, the solution is alpha = Q (z ./ (d + lam_n)),
// the residual coordinates are lam_n z_i / (d_i + lam_n), and the smoother
// trace is sum d_i / (d_i + lam_n).
inline double spec_rss(const VectorXd& ev, const VectorXd& z, double lam_n) {
  double rss = 0.0;
  for (int i = 0; i < z.size(); ++i) {
    const double r = lam_n * z[i] / (ev[i] + lam_n);
    rss += r * r;
  }
  return rss;
}
inline double spec_trs(const VectorXd& ev, double lam_n) {
  double t = 0.0;
  for (int i = 0; i < ev.size(); ++i) t += ev[i] / (ev[i] + lam_n);
  return t;
}
inline VectorXd spec_shrink(const VectorXd& ev, const VectorXd& z, double lam_n) {
  VectorXd w(z.size());
  for (int i = 0; i < z.size(); ++i) w[i] = z[i] / (ev[i] + lam_n);
  return w;
}

}  // namespace detail

// Median pairwise Euclidean distance over rows (deterministically strided
// down to ~2000 rows first when larger). Returns 1 when degenerate.
inline double median_heuristic_bandwidth(const XMatrix& X) {
  const int n = static_cast<int>(X.rows());
  if (n < 2) return 1.0;
  std::vector<int> rows;
  const int cap = 2000;
  if (n <= cap) {
    rows.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) rows[static_cast<size_t>(i)] = i;
  } else {
    const double stride = static_cast<double>(n) / cap;
    for (int r = 0; r < cap; ++r) rows.push_back(static_cast<int>(r * stride));
  }
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = i + 1; j < rows.size(); ++j)
      dists.push_back((X.row(rows[i]) - X.row(rows[j])).norm());
  double med = median_of(std::move(dists));
  return med > 0.0 ? med : 1.0;
}

class KernelWorkspace {
 public:
  KernelWorkspace(XMatrix x_train, double bandwidth)
      : x_(std::move(x_train)), h_(bandwidth > 0.0 ? bandwidth : median_heuristic_bandwidth(x_)) {
    const int n = static_cast<int>(x_.rows());
    if (n < 1) throw ArgumentError("kernel workspace needs at least 1 training row");
    MatrixXd k(n, n);
    const double inv = -1.0 / (2.0 * h_ * h_);
    for (int i = 0; i < n; ++i) {
      k(i, i) = 1.0;
      for (int j = i + 1; j < n; ++j) {
        const double d2 = (x_.row(i) - x_.row(j)).squaredNorm();
        const double v = std::exp(d2 * inv);
        k(i, j) = v;
        k(j, i) = v;
      }
    }
    k_ = k;  // kept: weighted systems are rebuilt from it per weight vector
    detail::sym_eig(std::move(k), eigval_, eigvec_);
    for (int i = 0; i < eigval_.size(); ++i) eigval_[i] = std::max(eigval_[i], 0.0);  // clamp roundoff
  }

  int n() const { return static_cast<int>(x_.rows()); }
  double bandwidth() const { return h_; }
  const XMatrix& train_x() const { return x_; }
  const MatrixXd& kernel() const { return k_; }

  // Spectral coordinates of a target vector.
  VectorXd project(const VectorXd& y) const { return eigvec_.transpose() * y; }

  // GCV pieces at ridge scale lam_n = lambda * n_ridge. With K = Q D Q^T and
  // alpha = (K + lam_n I)^{-1} y, the residual y - K alpha has spectral
  // coordinates lam_n z_i / (d_i + lam_n) and tr(S) = sum d_i / (d_i + lam_n).
  double rss_at(const VectorXd& z, double lam_n) const { return detail::spec_rss(eigval_, z, lam_n); }
  double trs_at(double lam_n) const { return detail::spec_trs(eigval_, lam_n); }
  VectorXd alpha_at(const VectorXd& z, double lam_n) const {
    return eigvec_ * detail::spec_shrink(eigval_, z, lam_n);
  }

  KrrFit fit_fixed(const VectorXd& y, double lambda) const {
    if (y.size() != n()) throw ArgumentError("target length does not match training rows");
    if (!(lambda > 0.0)) throw ArgumentError("ridge penalty must be positive");
    KrrFit f;
    f.lambda = lambda;
    f.alpha = alpha_at(project(y), lambda * n());
    return f;
  }

  // GCV over the grid; ties resolve to the smallest lambda.
  KrrFit fit(const VectorXd& y, const std::vector<double>& grid_in = {}) const {
    if (y.size() != n()) throw ArgumentError("target length does not match training rows");
    const std::vector<double> grid = grid_in.empty() ? default_lambda_grid() : grid_in;
    const VectorXd z = project(y);
    double best_lambda = grid.front();
    double best_gcv = std::numeric_limits<double>::infinity();
    for (double lam : grid) {
      const double lam_n = lam * n();
      const double denom = std::max(n() - trs_at(lam_n), 1e-12);
      const double gcv = rss_at(z, lam_n) * n() / (denom * denom);
      if (gcv < best_gcv) {
        best_gcv = gcv;
        best_lambda = lam;
      }
    }
    KrrFit f;
    f.lambda = best_lambda;
    f.alpha = alpha_at(z, best_lambda * n());
    return f;
  }

  MatrixXd cross_kernel(const XMatrix& x_pred) const {
    const int m = static_cast<int>(x_pred.rows());
    MatrixXd c(m, n());
    const double inv = -1.0 / (2.0 * h_ * h_);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n(); ++j) c(i, j) = std::exp((x_pred.row(i) - x_.row(j)).squaredNorm() * inv);
    return c;
  }

 private:
  XMatrix x_;
  double h_;
  MatrixXd k_;
  VectorXd eigval_;
  MatrixXd eigvec_;
};

// Self-contained fitted model (training rows + dual weights), for standalone
// use and for the MeanLearner interface.
class KrrModel {
 public:
  static KrrModel fit(const XMatrix& x, const VectorXd& y, double lambda, double bandwidth = 0.0) {
    if (x.rows() < 2) throw ArgumentError("fit_krr needs at least 2 rows");
    KernelWorkspace ws(x, bandwidth);
    return KrrModel(ws.train_x(), ws.fit_fixed(y, lambda).alpha, ws.bandwidth(), lambda);
  }
  static KrrModel fit_gcv(const XMatrix& x, const VectorXd& y, const KrrOptions& opts = {}) {
    if (x.rows() < 2) throw ArgumentError("fit_krr needs at least 2 rows");
    KernelWorkspace ws(x, opts.bandwidth);
    const KrrFit f = ws.fit(y, opts.lambda_grid);
    return KrrModel(ws.train_x(), f.alpha, ws.bandwidth(), f.lambda);
  }

  double predict(const Eigen::RowVectorXd& x) const {
    double acc = 0.0;
    const double inv = -1.0 / (2.0 * h_ * h_);
    for (int j = 0; j < x_.rows(); ++j) acc += std::exp((x - x_.row(j)).squaredNorm() * inv) * alpha_[j];
    return acc;
  }
  VectorXd predict(const XMatrix& x) const {
    VectorXd out(x.rows());
    for (int i = 0; i < x.rows(); ++i) out[i] = predict(Eigen::RowVectorXd(x.row(i)));
    return out;
  }

  double lambda() const { return lambda_; }
  double bandwidth() const { return h_; }
  const VectorXd& dual_weights() const { return alpha_; }

 private:
  KrrModel(XMatrix x, VectorXd alpha, double h, double lambda)
      : x_(std::move(x)), alpha_(std::move(alpha)), h_(h), lambda_(lambda) {}
  XMatrix x_;
  VectorXd alpha_;
  double h_;
  double lambda_;
};

inline MeanLearner krr_mean_learner(const KrrOptions& opts = {}) {
  return [opts](const XMatrix& x, const VectorXd& t) -> MeanPredictor {
    auto model = std::make_shared<KrrModel>(KrrModel::fit_gcv(x, t, opts));
    return [model](const Eigen::RowVectorXd& x_row) { return model->predict(x_row); };
  };
}

// ---------------------------------------------------------------------------
// Category-cell splitting for binary covariates.

class GroupedWorkspace {
 public:
  GroupedWorkspace(const XMatrix& x_train, std::vector<int> binary_cols, KrrOptions opts = {})
      : binary_cols_(std::move(binary_cols)), opts_(std::move(opts)) {
    const int n = static_cast<int>(x_train.rows());
    if (n < 1) throw ArgumentError("grouped workspace needs at least 1 training row");
    cont_cols_.clear();
    for (int j = 0; j < x_train.cols(); ++j)
      if (std::find(binary_cols_.begin(), binary_cols_.end(), j) == binary_cols_.end()) cont_cols_.push_back(j);

    std::map<std::uint64_t, int> key_to_cell;
    row_cell_.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const std::uint64_t key = cell_key(x_train.row(i));
      auto [it, inserted] = key_to_cell.try_emplace(key, static_cast<int>(key_to_cell.size()));
      if (inserted) cell_keys_.push_back(key);
      row_cell_[static_cast<size_t>(i)] = it->second;
    }
    const int n_cells = static_cast<int>(key_to_cell.size());
    cell_rows_.resize(static_cast<size_t>(n_cells));
    for (int i = 0; i < n; ++i) cell_rows_[static_cast<size_t>(row_cell_[static_cast<size_t>(i)])].push_back(i);

    int min_rows = n;
    for (const auto& rows : cell_rows_) min_rows = std::min(min_rows, static_cast<int>(rows.size()));
    pooled_ = (n_cells > 1) && (min_rows < opts_.min_cell_rows);
    n_total_ = n;

    // Continuous-column view of the training rows, per cell.
    const XMatrix xc = continuous_view(x_train);
    const double pooled_h = (opts_.bandwidth > 0.0) ? opts_.bandwidth : median_heuristic_bandwidth(xc);
    for (const auto& rows : cell_rows_) {
      XMatrix sub(static_cast<int>(rows.size()), xc.cols());
      for (size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<int>(r)) = xc.row(rows[r]);
      double h = opts_.bandwidth;
      if (h <= 0.0) h = (rows.size() >= 2) ? median_heuristic_bandwidth(sub) : pooled_h;
      if (h <= 0.0) h = pooled_h;
      cells_.emplace_back(std::move(sub), h);
    }
  }

  struct GroupedFit {
    std::vector<KrrFit> per_cell;
    bool pooled = false;
    double fallback_mean = 0.0;  // prediction for binary combinations unseen in training
  };

  GroupedFit fit(const VectorXd& y) const {
    if (y.size() != n_total_) throw ArgumentError("target length does not match training rows");
    GroupedFit out;
    out.pooled = pooled_;
    out.fallback_mean = y.mean();
    std::vector<VectorXd> cell_y(cells_.size());
    for (size_t c = 0; c < cells_.size(); ++c) {
      const auto& rows = cell_rows_[c];
      VectorXd sub(static_cast<int>(rows.size()));
      for (size_t r = 0; r < rows.size(); ++r) sub[static_cast<int>(r)] = y[rows[r]];
      cell_y[c] = std::move(sub);
    }
    if (!pooled_) {
      for (size_t c = 0; c < cells_.size(); ++c) out.per_cell.push_back(cells_[c].fit(cell_y[c], opts_.lambda_grid));
      return out;
    }
    // Pooled: one block-diagonal system (K_c + lambda * n_total I), GCV summed
    // over cells, single lambda.
    const std::vector<double> grid = opts_.lambda_grid.empty() ? default_lambda_grid() : opts_.lambda_grid;
    std::vector<VectorXd> z(cells_.size());
    for (size_t c = 0; c < cells_.size(); ++c) z[c] = cells_[c].project(cell_y[c]);
    double best_lambda = grid.front();
    double best_gcv = std::numeric_limits<double>::infinity();
    for (double lam : grid) {
      const double lam_n = lam * n_total_;
      double rss = 0.0, trs = 0.0;
      for (size_t c = 0; c < cells_.size(); ++c) {
        rss += cells_[c].rss_at(z[c], lam_n);
        trs += cells_[c].trs_at(lam_n);
      }
      const double denom = std::max(n_total_ - trs, 1e-12);
      const double gcv = rss * n_total_ / (denom * denom);
      if (gcv < best_gcv) {
        best_gcv = gcv;
        best_lambda = lam;
      }
    }
    for (size_t c = 0; c < cells_.size(); ++c) {
      KrrFit f;
      f.lambda = best_lambda;
      f.alpha = cells_[c].alpha_at(z[c], best_lambda * n_total_);
      out.per_cell.push_back(std::move(f));
    }
    return out;
  }

  // Weight-in-the-loss ridge: minimize sum_i wts_i (y_i - f(x_i))^2 over the
  // same RKHS. With D = diag(sqrt(wts)) the system matrix is M = D K D; its
  // factorization depends on the weights, so it is built once per weight
  // vector and shared by every response fitted under those weights. The
  // solution is f(x) = k(x)^T beta with beta = D Q ((Q^T D y) ./ (d + lam_n)),
  // which predicts through the same cross-kernels as an unweighted fit.
  struct WeightedSystem {
    struct Cell {
      VectorXd dsq;     // sqrt of the cell's weights
      VectorXd eigval;  // of D K D, clamped >= 0
      MatrixXd eigvec;
    };
    std::vector<Cell> cells;
    double weight_sum = 0.0;
    int n_positive = 0;
  };

  WeightedSystem weighted(const VectorXd& wts) const {
    if (wts.size() != n_total_) throw ArgumentError("weight length does not match training rows");
    WeightedSystem sys;
    for (int i = 0; i < wts.size(); ++i) {
      if (!(wts[i] >= 0.0)) throw ArgumentError("weighted fit requires nonnegative finite weights");
      sys.weight_sum += wts[i];
      if (wts[i] > 0.0) ++sys.n_positive;
    }
    sys.cells.reserve(cells_.size());
    for (size_t c = 0; c < cells_.size(); ++c) {
      const auto& rows = cell_rows_[c];
      WeightedSystem::Cell cell;
      cell.dsq.resize(static_cast<int>(rows.size()));
      for (size_t r = 0; r < rows.size(); ++r) cell.dsq[static_cast<int>(r)] = std::sqrt(wts[rows[r]]);
      MatrixXd m = cell.dsq.asDiagonal() * cells_[c].kernel() * cell.dsq.asDiagonal();
      detail::sym_eig(std::move(m), cell.eigval, cell.eigvec);
      for (int i = 0; i < cell.eigval.size(); ++i) cell.eigval[i] = std::max(cell.eigval[i], 0.0);
      sys.cells.push_back(std::move(cell));
    }
    return sys;
  }

  // GCV choice of lambda under a weighted system (per cell, or one pooled
  // lambda when cells are tied). A cell whose weights are all zero gets a
  // zero fit: it contributes nothing and predicts zero.
  GroupedFit fit_weighted(const WeightedSystem& sys, const VectorXd& y) const {
    if (sys.n_positive < 2) throw FitError("weighted fit needs at least 2 rows with positive weight");
    const std::vector<VectorXd> z = weighted_coords(sys, y);
    GroupedFit out;
    out.pooled = pooled_;
    out.fallback_mean = weighted_mean(sys, y);
    const std::vector<double> grid = opts_.lambda_grid.empty() ? default_lambda_grid() : opts_.lambda_grid;
    if (!pooled_) {
      for (size_t c = 0; c < cells_.size(); ++c) {
        const int nc = cells_[c].n();
        double best_lambda = grid.front();
        double best_gcv = std::numeric_limits<double>::infinity();
        for (double lam : grid) {
          const double lam_n = lam * nc;
          const double denom = std::max(nc - detail::spec_trs(sys.cells[c].eigval, lam_n), 1e-12);
          const double gcv = detail::spec_rss(sys.cells[c].eigval, z[c], lam_n) * nc / (denom * denom);
          if (gcv < best_gcv) {
            best_gcv = gcv;
            best_lambda = lam;
          }
        }
        out.per_cell.push_back(weighted_cell_fit(sys, z, c, best_lambda, best_lambda * nc));
      }
      return out;
    }
    double best_lambda = grid.front();
    double best_gcv = std::numeric_limits<double>::infinity();
    for (double lam : grid) {
      const double lam_n = lam * n_total_;
      double rss = 0.0, trs = 0.0;
      for (size_t c = 0; c < cells_.size(); ++c) {
        rss += detail::spec_rss(sys.cells[c].eigval, z[c], lam_n);
        trs += detail::spec_trs(sys.cells[c].eigval, lam_n);
      }
      const double denom = std::max(n_total_ - trs, 1e-12);
      const double gcv = rss * n_total_ / (denom * denom);
      if (gcv < best_gcv) {
        best_gcv = gcv;
        best_lambda = lam;
      }
    }
    for (size_t c = 0; c < cells_.size(); ++c)
      out.per_cell.push_back(weighted_cell_fit(sys, z, c, best_lambda, best_lambda * n_total_));
    return out;
  }

  // Re-fit a new response under the same weighted system, reusing the ridge
  // penalties of a reference fit. Affine targets need this: the fit of
  // U(theta) = theta + u0 equals theta * fit(1) + fit(u0) exactly only when
  // all three fits share one lambda.
  GroupedFit fit_weighted_like(const WeightedSystem& sys, const VectorXd& y, const GroupedFit& ref) const {
    if (ref.per_cell.size() != cells_.size())
      throw ArgumentError("reference fit does not match this workspace");
    const std::vector<VectorXd> z = weighted_coords(sys, y);
    GroupedFit out;
    out.pooled = ref.pooled;
    out.fallback_mean = weighted_mean(sys, y);
    for (size_t c = 0; c < cells_.size(); ++c) {
      const double lambda = ref.per_cell[c].lambda;
      const double lam_n = lambda * (ref.pooled ? n_total_ : cells_[c].n());
      out.per_cell.push_back(weighted_cell_fit(sys, z, c, lambda, lam_n));
    }
    return out;
  }

  // Prediction-row bookkeeping: cell assignment plus cached cross-kernels.
  // Build once per prediction set, reuse across refits.
  struct CrossContext {
    std::vector<int> pred_cell;            // -1 for unseen binary combination
    std::vector<MatrixXd> cross_per_cell;  // rows aligned with pred_rows_in_cell
    std::vector<std::vector<int>> pred_rows_in_cell;
    int n_pred = 0;
  };

  CrossContext cross(const XMatrix& x_pred) const {
    CrossContext ctx;
    ctx.n_pred = static_cast<int>(x_pred.rows());
    ctx.pred_cell.resize(static_cast<size_t>(ctx.n_pred));
    ctx.pred_rows_in_cell.resize(cells_.size());
    for (int i = 0; i < ctx.n_pred; ++i) {
      const std::uint64_t key = cell_key(x_pred.row(i));
      int cell = -1;
      for (size_t c = 0; c < cell_keys_.size(); ++c)
        if (cell_keys_[c] == key) {
          cell = static_cast<int>(c);
          break;
        }
      ctx.pred_cell[static_cast<size_t>(i)] = cell;
      if (cell >= 0) ctx.pred_rows_in_cell[static_cast<size_t>(cell)].push_back(i);
    }
    const XMatrix xc = continuous_view(x_pred);
    for (size_t c = 0; c < cells_.size(); ++c) {
      const auto& rows = ctx.pred_rows_in_cell[c];
      XMatrix sub(static_cast<int>(rows.size()), xc.cols());
      for (size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<int>(r)) = xc.row(rows[r]);
      ctx.cross_per_cell.push_back(cells_[c].cross_kernel(sub));
    }
    return ctx;
  }

  VectorXd predict(const CrossContext& ctx, const GroupedFit& fit) const {
    VectorXd out = VectorXd::Constant(ctx.n_pred, fit.fallback_mean);
    for (size_t c = 0; c < cells_.size(); ++c) {
      const VectorXd vals = ctx.cross_per_cell[c] * fit.per_cell[c].alpha;
      const auto& rows = ctx.pred_rows_in_cell[c];
      for (size_t r = 0; r < rows.size(); ++r) out[rows[r]] = vals[static_cast<int>(r)];
    }
    return out;
  }

  int n() const { return n_total_; }
  int n_cells() const { return static_cast<int>(cells_.size()); }
  bool pooled() const { return pooled_; }

 private:
  // Spectral coordinates of D y per cell under a weighted system.
  std::vector<VectorXd> weighted_coords(const WeightedSystem& sys, const VectorXd& y) const {
    if (y.size() != n_total_) throw ArgumentError("target length does not match training rows");
    if (sys.cells.size() != cells_.size()) throw ArgumentError("weighted system does not match this workspace");
    std::vector<VectorXd> z(cells_.size());
    for (size_t c = 0; c < cells_.size(); ++c) {
      const auto& rows = cell_rows_[c];
      VectorXd dy(static_cast<int>(rows.size()));
      for (size_t r = 0; r < rows.size(); ++r) dy[static_cast<int>(r)] = sys.cells[c].dsq[static_cast<int>(r)] * y[rows[r]];
      z[c] = sys.cells[c].eigvec.transpose() * dy;
    }
    return z;
  }

  double weighted_mean(const WeightedSystem& sys, const VectorXd& y) const {
    if (sys.weight_sum <= 0.0) return 0.0;
    double acc = 0.0;
    for (size_t c = 0; c < cells_.size(); ++c) {
      const auto& rows = cell_rows_[c];
      for (size_t r = 0; r < rows.size(); ++r) {
        const double d = sys.cells[c].dsq[static_cast<int>(r)];
        acc += d * d * y[rows[r]];
      }
    }
    return acc / sys.weight_sum;
  }

  KrrFit weighted_cell_fit(const WeightedSystem& sys, const std::vector<VectorXd>& z, size_t c, double lambda,
                           double lam_n) const {
    KrrFit f;
    f.lambda = lambda;
    f.alpha = sys.cells[c].dsq.cwiseProduct(
        sys.cells[c].eigvec * detail::spec_shrink(sys.cells[c].eigval, z[c], lam_n));
    return f;
  }

  template <typename Row>
  std::uint64_t cell_key(const Row& row) const {
    std::uint64_t key = 0;
    for (size_t b = 0; b < binary_cols_.size(); ++b) {
      const double v = row[binary_cols_[b]];
      if (v != 0.0 && v != 1.0)
        throw ArgumentError("column flagged binary contains value " + std::to_string(v) + " (must be 0 or 1)");
      key |= (v == 1.0 ? 1ULL : 0ULL) << b;
    }
    return key;
  }

  XMatrix continuous_view(const XMatrix& x) const {
    if (cont_cols_.empty()) return XMatrix::Zero(x.rows(), 1);  // degenerate: constant within cells
    XMatrix out(x.rows(), static_cast<int>(cont_cols_.size()));
    for (size_t j = 0; j < cont_cols_.size(); ++j) out.col(static_cast<int>(j)) = x.col(cont_cols_[j]);
    return out;
  }

  std::vector<int> binary_cols_, cont_cols_;
  KrrOptions opts_;
  std::vector<KernelWorkspace> cells_;
  std::vector<std::vector<int>> cell_rows_;
  std::vector<int> row_cell_;
  std::vector<std::uint64_t> cell_keys_;
  int n_total_ = 0;
  bool pooled_ = false;
};

}  // namespace dualframe
