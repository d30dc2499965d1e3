#pragma once

// Observed-data container: one row per population unit, with the
// pattern-dependent missingness of a dual-frame design.
//
//   pattern (delta_np, delta_p) | y observed | pi_p observed
//   (1,1), (1,0), (0,1)         | yes        | iff delta_p = 1
//   (0,0)                       | no         | no
//
// Covariates are observed for every unit, and (0,0) units must be present as
// rows: the estimators sum over the full population of N units.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dualframe/common.hpp"
#include "dualframe/rng.hpp"

namespace dualframe {

// Lightweight row view into a DualFrameDataset.
struct UnitRecord {
  long long id = 0;
  int delta_np = 0;
  int delta_p = 0;
  double pi_p = kNaN;  // NaN when unobserved
  double y = kNaN;     // NaN when unobserved
  const double* x = nullptr;
  int x_dim = 0;

  bool in_union() const { return delta_np + delta_p >= 1; }
};

// Row-major so that a unit's covariate row is contiguous in memory.
using XMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class DualFrameDataset {
 public:
  std::vector<long long> ids;
  std::vector<std::uint8_t> delta_np;
  std::vector<std::uint8_t> delta_p;
  VectorXd pi_p;  // NaN-coded missing
  VectorXd y;     // NaN-coded missing
  XMatrix x;      // n_total × x_dim, row i = covariates of unit i
  std::vector<std::string> covariate_names;

  int n_total() const { return static_cast<int>(ids.size()); }
  int x_dim() const { return static_cast<int>(x.cols()); }

  UnitRecord record(int i) const {
    UnitRecord r;
    r.id = ids[static_cast<size_t>(i)];
    r.delta_np = delta_np[static_cast<size_t>(i)];
    r.delta_p = delta_p[static_cast<size_t>(i)];
    r.pi_p = pi_p[i];
    r.y = y[i];
    r.x = (x.cols() > 0) ? &x(i, 0) : nullptr;  // contiguous: x is row-major
    r.x_dim = x_dim();
    return r;
  }

  Eigen::RowVectorXd x_row(int i) const { return x.row(i); }

  int count_np() const {
    int n = 0;
    for (auto d : delta_np) n += d;
    return n;
  }
  int count_p() const {
    int n = 0;
    for (auto d : delta_p) n += d;
    return n;
  }
  int count_union() const {
    int n = 0;
    for (size_t i = 0; i < ids.size(); ++i) n += (delta_np[i] | delta_p[i]) ? 1 : 0;
    return n;
  }

  // Throws ValidationError / DomainError listing every offending id.
  void validate() const;
};

struct FoldPartition {
  std::vector<int> assignments;  // per-record fold index in {1..k}
  int k = 0;

  std::vector<int> indices_in(int fold) const {
    std::vector<int> out;
    for (size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] == fold) out.push_back(static_cast<int>(i));
    return out;
  }
  std::vector<int> indices_not_in(int fold) const {
    std::vector<int> out;
    for (size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] != fold) out.push_back(static_cast<int>(i));
    return out;
  }
};

// Column mapping for load_csv; covariates are every column not named here, in
// file order.
struct CsvSchema {
  std::string id = "id";
  std::string delta_np = "delta_np";
  std::string delta_p = "delta_p";
  std::string pi_p = "pi_p";
  std::string y = "y";
};

// ---------------------------------------------------------------------------
// Implementation

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline bool field_missing(const std::string& f) {
  if (f.empty()) return true;
  return f == "NA" || f == "na" || f == "NaN" || f == "nan";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_double(const std::string& f, int line_no, const std::string& col) {
  const char* begin = f.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + f + "' in column " + col);
  return v;
}

inline long long parse_int(const std::string& f, int line_no, const std::string& col) {
  const char* begin = f.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + f + "' as integer in column " + col);
  return v;
}

inline std::string join_ids(const std::vector<long long>& ids) {
  std::string out;
  const size_t show = std::min<size_t>(ids.size(), 20);
  for (size_t i = 0; i < show; ++i) {
    if (i) out += ", ";
    out += std::to_string(ids[i]);
  }
  if (ids.size() > show) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void DualFrameDataset::validate() const {
  const size_t n = ids.size();
  if (delta_np.size() != n || delta_p.size() != n || static_cast<size_t>(pi_p.size()) != n ||
      static_cast<size_t>(y.size()) != n || static_cast<size_t>(x.rows()) != n)
    throw ValidationError("dataset columns have inconsistent lengths");

  std::vector<long long> bad_delta, bad_y, bad_pi, bad_pi_domain, bad_x, dup_ids;
  {
    std::vector<long long> sorted(ids);
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 1; i < sorted.size(); ++i)
      if (sorted[i] == sorted[i - 1] && (dup_ids.empty() || dup_ids.back() != sorted[i]))
        dup_ids.push_back(sorted[i]);
  }
  for (size_t i = 0; i < n; ++i) {
    const int dnp = delta_np[i], dp = delta_p[i];
    if ((dnp != 0 && dnp != 1) || (dp != 0 && dp != 1)) bad_delta.push_back(ids[i]);
    const bool union_member = (dnp == 1 || dp == 1);
    const bool y_present = !is_missing(y[static_cast<int>(i)]);
    if (y_present != union_member) bad_y.push_back(ids[i]);
    const double pp = pi_p[static_cast<int>(i)];
    const bool pi_present = !is_missing(pp);
    if (pi_present != (dp == 1))
      bad_pi.push_back(ids[i]);
    else if (pi_present && !(pp > 0.0 && pp < 1.0))
      bad_pi_domain.push_back(ids[i]);
    for (int j = 0; j < x.cols(); ++j)
      if (!std::isfinite(x(static_cast<int>(i), j))) {
        bad_x.push_back(ids[i]);
        break;
      }
  }

  if (!bad_pi_domain.empty())
    throw DomainError("pi_p outside (0,1) for ids: " + detail::join_ids(bad_pi_domain));

  std::string msg;
  if (!dup_ids.empty()) msg += "duplicate ids: " + detail::join_ids(dup_ids) + "; ";
  if (!bad_delta.empty()) msg += "sampling indicators not in {0,1} for ids: " + detail::join_ids(bad_delta) + "; ";
  if (!bad_y.empty())
    msg += "y must be present iff delta_np + delta_p >= 1; violated for ids: " + detail::join_ids(bad_y) + "; ";
  if (!bad_pi.empty())
    msg += "pi_p must be present iff delta_p = 1; violated for ids: " + detail::join_ids(bad_pi) + "; ";
  if (!bad_x.empty()) msg += "covariates missing or non-finite for ids: " + detail::join_ids(bad_x) + "; ";
  if (!msg.empty()) throw ValidationError(msg.substr(0, msg.size() - 2));

  bool any_np = false, any_p = false;
  for (size_t i = 0; i < n; ++i) {
    any_np = any_np || delta_np[i] == 1;
    any_p = any_p || delta_p[i] == 1;
  }
  if (n > 0 && (!any_np || !any_p))
    throw ValidationError("dataset needs at least one delta_np=1 record and one delta_p=1 record");
}

inline DualFrameDataset load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);

  std::string header;
  if (!std::getline(in, header)) throw ParseError(path + ": empty file (header required)");
  const std::vector<std::string> cols = detail::split_csv_line(header);

  int c_id = -1, c_dnp = -1, c_dp = -1, c_pi = -1, c_y = -1;
  std::vector<int> x_cols;
  std::vector<std::string> x_names;
  for (size_t j = 0; j < cols.size(); ++j) {
    const std::string& name = cols[j];
    if (name == schema.id)
      c_id = static_cast<int>(j);
    else if (name == schema.delta_np)
      c_dnp = static_cast<int>(j);
    else if (name == schema.delta_p)
      c_dp = static_cast<int>(j);
    else if (name == schema.pi_p)
      c_pi = static_cast<int>(j);
    else if (name == schema.y)
      c_y = static_cast<int>(j);
    else {
      x_cols.push_back(static_cast<int>(j));
      x_names.push_back(name);
    }
  }
  if (c_id < 0 || c_dnp < 0 || c_dp < 0 || c_pi < 0 || c_y < 0)
    throw ParseError(path + ": header must contain columns " + schema.id + ", " + schema.delta_np + ", " +
                     schema.delta_p + ", " + schema.pi_p + ", " + schema.y);

  std::vector<long long> ids;
  std::vector<std::uint8_t> dnp, dp;
  std::vector<double> pip, yv;
  std::vector<double> xv;  // row-major staging
  const int p = static_cast<int>(x_cols.size());

  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != cols.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols.size()) +
                       " fields, got " + std::to_string(f.size()));
    ids.push_back(detail::parse_int(f[static_cast<size_t>(c_id)], line_no, schema.id));
    const long long d1 = detail::parse_int(f[static_cast<size_t>(c_dnp)], line_no, schema.delta_np);
    const long long d2 = detail::parse_int(f[static_cast<size_t>(c_dp)], line_no, schema.delta_p);
    if ((d1 != 0 && d1 != 1) || (d2 != 0 && d2 != 1))
      throw ParseError("line " + std::to_string(line_no) + ": sampling indicators must be 0 or 1");
    dnp.push_back(static_cast<std::uint8_t>(d1));
    dp.push_back(static_cast<std::uint8_t>(d2));
    const std::string& fpi = f[static_cast<size_t>(c_pi)];
    pip.push_back(detail::field_missing(fpi) ? kNaN : detail::parse_double(fpi, line_no, schema.pi_p));
    const std::string& fy = f[static_cast<size_t>(c_y)];
    yv.push_back(detail::field_missing(fy) ? kNaN : detail::parse_double(fy, line_no, schema.y));
    for (int j = 0; j < p; ++j) {
      const std::string& fx = f[static_cast<size_t>(x_cols[static_cast<size_t>(j)])];
      if (detail::field_missing(fx))
        throw ParseError("line " + std::to_string(line_no) + ": covariate " + x_names[static_cast<size_t>(j)] +
                         " is missing (covariates must be observed for all units)");
      xv.push_back(detail::parse_double(fx, line_no, x_names[static_cast<size_t>(j)]));
    }
  }

  DualFrameDataset ds;
  const int n = static_cast<int>(ids.size());
  ds.ids = std::move(ids);
  ds.delta_np = std::move(dnp);
  ds.delta_p = std::move(dp);
  ds.pi_p = Eigen::Map<VectorXd>(pip.data(), n);
  ds.y = Eigen::Map<VectorXd>(yv.data(), n);
  ds.x = Eigen::Map<XMatrix>(xv.data(), n, p);
  ds.covariate_names = std::move(x_names);
  ds.validate();
  return ds;
}

inline void write_csv(const DualFrameDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open file for writing: " + path);
  out << "id,delta_np,delta_p,pi_p,y";
  for (const auto& name : ds.covariate_names) out << ',' << name;
  out << '\n';
  for (int i = 0; i < ds.n_total(); ++i) {
    out << ds.ids[static_cast<size_t>(i)] << ',' << int(ds.delta_np[static_cast<size_t>(i)]) << ','
        << int(ds.delta_p[static_cast<size_t>(i)]) << ',';
    if (!is_missing(ds.pi_p[i])) out << detail::format_double(ds.pi_p[i]);
    out << ',';
    if (!is_missing(ds.y[i])) out << detail::format_double(ds.y[i]);
    for (int j = 0; j < ds.x_dim(); ++j) out << ',' << detail::format_double(ds.x(i, j));
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

// S4 transform: an overlap unit appears in both frames but cannot be linked,
// so each (1,1) record becomes two records — a (1,0) copy keeping the original
// id (pi_p dropped) and a (0,1) copy under a fresh id (pi_p kept). Output
// contains no (1,1) patterns; applying the transform twice is a no-op.
inline DualFrameDataset relabel_unlinked(const DualFrameDataset& ds) {
  long long max_id = 0;
  for (long long id : ds.ids) max_id = std::max(max_id, id);

  int n_overlap = 0;
  for (int i = 0; i < ds.n_total(); ++i)
    if (ds.delta_np[static_cast<size_t>(i)] == 1 && ds.delta_p[static_cast<size_t>(i)] == 1) ++n_overlap;

  DualFrameDataset out;
  const int n_new = ds.n_total() + n_overlap;
  out.covariate_names = ds.covariate_names;
  out.ids.reserve(static_cast<size_t>(n_new));
  out.delta_np.reserve(static_cast<size_t>(n_new));
  out.delta_p.reserve(static_cast<size_t>(n_new));
  out.pi_p.resize(n_new);
  out.y.resize(n_new);
  out.x.resize(n_new, ds.x_dim());

  long long next_id = max_id;
  int w = 0;
  auto push = [&](long long id, int dnp, int dp, double pip, double yv, int src_row) {
    out.ids.push_back(id);
    out.delta_np.push_back(static_cast<std::uint8_t>(dnp));
    out.delta_p.push_back(static_cast<std::uint8_t>(dp));
    out.pi_p[w] = pip;
    out.y[w] = yv;
    out.x.row(w) = ds.x.row(src_row);
    ++w;
  };
  for (int i = 0; i < ds.n_total(); ++i) {
    const int dnp = ds.delta_np[static_cast<size_t>(i)], dp = ds.delta_p[static_cast<size_t>(i)];
    if (dnp == 1 && dp == 1) {
      push(ds.ids[static_cast<size_t>(i)], 1, 0, kNaN, ds.y[i], i);
      push(++next_id, 0, 1, ds.pi_p[i], ds.y[i], i);
    } else {
      push(ds.ids[static_cast<size_t>(i)], dnp, dp, ds.pi_p[i], ds.y[i], i);
    }
  }
  return out;
}

// Balanced uniform-random fold assignment, deterministic given seed.
inline FoldPartition split_folds(int n_total, int k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("split_folds: k must be at least 2");
  if (k > n_total) throw ArgumentError("split_folds: k exceeds number of records");
  FoldPartition fp;
  fp.k = k;
  fp.assignments.reserve(static_cast<size_t>(n_total));
  const int base = n_total / k, extra = n_total % k;
  for (int f = 1; f <= k; ++f) {
    const int size = base + (f <= extra ? 1 : 0);
    for (int c = 0; c < size; ++c) fp.assignments.push_back(f);
  }
  Rng rng(splitmix64(seed));
  for (int i = n_total - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(fp.assignments[static_cast<size_t>(i)], fp.assignments[static_cast<size_t>(j)]);
  }
  return fp;
}

inline FoldPartition split_folds(const DualFrameDataset& ds, int k, std::uint64_t seed) {
  return split_folds(ds.n_total(), k, seed);
}

}  // namespace dualframe
