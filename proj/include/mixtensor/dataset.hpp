#pragma once

// Observations (Y_i, x_i) plus delimited-text IO. File columns are headed
// "y:<name>" for responses, "x:<name>" for predictors and optionally "z:<name>"
// for retained latent labels. Category labels are 1-based in files and
// 0-based in memory; the converters in this header are the only place that
// mapping exists.

#include <Eigen/Dense>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mixtensor/errors.hpp"
#include "mixtensor/shape.hpp"

namespace mixtensor {

struct Dataset {
  Shape shape;
  Eigen::MatrixXd X;   // n x p
  Eigen::MatrixXi Y;   // n x M, zero-based categories
  bool intercept = false;  // X.col(0) is all ones and excluded from penalties
  std::vector<int> z;      // optional latent labels, zero-based; empty if absent

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }

  void validate() const {
    if (X.rows() != Y.rows()) throw dimension_error("dataset: X/Y row mismatch");
    if (Y.cols() != shape.num_responses())
      throw dimension_error("dataset: response count does not match shape");
    for (int i = 0; i < Y.rows(); ++i)
      for (int m = 0; m < Y.cols(); ++m)
        if (Y(i, m) < 0 || Y(i, m) >= shape.dims[m])
          throw data_error("dataset: category out of range at row " +
                           std::to_string(i + 1) + ", response " + std::to_string(m + 1));
    if (!z.empty() && static_cast<int>(z.size()) != n())
      throw dimension_error("dataset: latent label count mismatch");
    if (intercept) {
      if (X.cols() < 1 || (X.col(0).array() != 1.0).any())
        throw data_error("dataset: intercept flag set but first column is not all ones");
    }
  }

  // Whether predictor column j is subject to penalties.
  bool penalized_column(int j) const { return !(intercept && j == 0); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, int line_no) {
  double v;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw data_error("dataset: bad numeric value '" + s + "' at line " +
                     std::to_string(line_no));
  return v;
}

inline long parse_int(const std::string& s, int line_no) {
  long v;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw data_error("dataset: bad integer value '" + s + "' at line " +
                     std::to_string(line_no));
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace detail

// Loads a delimited dataset. Category counts are inferred from the data
// (max label per response) unless `shape` is supplied. An all-ones intercept
// column is prepended unless add_intercept is false or the file already has
// one flagged by a leading "x:(intercept)" column.
inline Dataset load_dataset_csv(const std::string& path, bool add_intercept = true,
                                const Shape* shape = nullptr) {
  std::ifstream in(path);
  if (!in) throw data_error("dataset: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw data_error("dataset: '" + path + "' is empty");
  const auto header = detail::split_csv_line(line);
  std::vector<int> y_cols, x_cols;
  int z_col = -1;
  for (std::size_t k = 0; k < header.size(); ++k) {
    const std::string& h = header[k];
    if (h.rfind("y:", 0) == 0) y_cols.push_back(static_cast<int>(k));
    else if (h.rfind("x:", 0) == 0) x_cols.push_back(static_cast<int>(k));
    else if (h.rfind("z:", 0) == 0) {
      if (z_col >= 0) throw data_error("dataset: multiple z: columns in '" + path + "'");
      z_col = static_cast<int>(k);
    } else {
      throw data_error("dataset: unknown column '" + h + "' in '" + path +
                       "' (expected y:, x: or z: prefix)");
    }
  }
  if (y_cols.empty()) throw data_error("dataset: no y: columns in '" + path + "'");
  if (x_cols.empty()) throw data_error("dataset: no x: columns in '" + path + "'");

  const bool file_has_intercept =
      header[x_cols.front()] == "x:(intercept)";

  std::vector<std::vector<double>> xs;
  std::vector<std::vector<long>> ys;
  std::vector<long> zs;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw data_error("dataset: wrong field count at line " + std::to_string(line_no) +
                       " of '" + path + "'");
    std::vector<double> xr(x_cols.size());
    for (std::size_t k = 0; k < x_cols.size(); ++k)
      xr[k] = detail::parse_double(cells[x_cols[k]], line_no);
    std::vector<long> yr(y_cols.size());
    for (std::size_t k = 0; k < y_cols.size(); ++k) {
      yr[k] = detail::parse_int(cells[y_cols[k]], line_no);
      if (yr[k] < 1)
        throw data_error("dataset: category labels are 1-based; got " +
                         std::to_string(yr[k]) + " at line " + std::to_string(line_no));
    }
    if (z_col >= 0) zs.push_back(detail::parse_int(cells[z_col], line_no));
    xs.push_back(std::move(xr));
    ys.push_back(std::move(yr));
  }
  if (xs.empty()) throw data_error("dataset: '" + path + "' has no data rows");

  const int n = static_cast<int>(xs.size());
  const int M = static_cast<int>(y_cols.size());
  Dataset d;
  if (shape) {
    d.shape = *shape;
    if (d.shape.num_responses() != M)
      throw dimension_error("dataset: file has " + std::to_string(M) +
                            " responses, expected " +
                            std::to_string(shape->num_responses()));
  } else {
    std::vector<int> dims(M, 2);
    for (const auto& yr : ys)
      for (int m = 0; m < M; ++m) dims[m] = std::max(dims[m], static_cast<int>(yr[m]));
    d.shape = Shape(dims);
  }
  const bool prepend = add_intercept && !file_has_intercept;
  const int p_file = static_cast<int>(x_cols.size());
  d.X.resize(n, p_file + (prepend ? 1 : 0));
  d.Y.resize(n, M);
  for (int i = 0; i < n; ++i) {
    int off = 0;
    if (prepend) d.X(i, off++) = 1.0;
    for (int k = 0; k < p_file; ++k) d.X(i, off + k) = xs[i][k];
    for (int m = 0; m < M; ++m) d.Y(i, m) = static_cast<int>(ys[i][m]) - 1;
  }
  d.intercept = prepend || file_has_intercept;
  if (z_col >= 0) {
    d.z.resize(n);
    for (int i = 0; i < n; ++i) d.z[i] = static_cast<int>(zs[i]) - 1;
  }
  d.validate();
  return d;
}

inline void write_dataset_csv(const Dataset& d, const std::string& path,
                              bool include_z = false) {
  std::ofstream out(path);
  if (!out) throw data_error("dataset: cannot write '" + path + "'");
  const int j0 = d.intercept ? 1 : 0;  // the intercept column is implicit on load
  for (int m = 0; m < d.shape.num_responses(); ++m) {
    if (m) out << ',';
    out << "y:" << (m + 1);
  }
  for (int j = j0; j < d.p(); ++j) out << ",x:" << (j - j0 + 1);
  if (include_z && !d.z.empty()) out << ",z:1";
  out << '\n';
  for (int i = 0; i < d.n(); ++i) {
    for (int m = 0; m < d.shape.num_responses(); ++m) {
      if (m) out << ',';
      out << (d.Y(i, m) + 1);
    }
    for (int j = j0; j < d.p(); ++j) out << ',' << detail::format_double(d.X(i, j));
    if (include_z && !d.z.empty()) out << ',' << (d.z[i] + 1);
    out << '\n';
  }
  if (!out) throw data_error("dataset: write to '" + path + "' failed");
}

}  // namespace mixtensor
