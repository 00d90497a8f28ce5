#pragma once
// Small dense row-major matrix plus the handful of kernels the model needs.
// Everything is double precision; shapes are checked on every operation so a
// mismatched gradient shows up as an exception instead of silent corruption.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace taco {

using Vec = std::vector<double>;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, rows*cols entries

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) { data.assign(data.size(), v); }
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::logic_error("linalg: " + what);
}

// y = x * M for a row vector x (len M.rows), result len M.cols.
inline Vec row_times(const Vec& x, const Matrix& m) {
  require(x.size() == m.rows, "row_times shape");
  Vec y(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* mr = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) y[c] += xr * mr[c];
  }
  return y;
}

// y = x * M^T for a row vector x (len M.cols), result len M.rows.
inline Vec row_times_transposed(const Vec& x, const Matrix& m) {
  require(x.size() == m.cols, "row_times_transposed shape");
  Vec y(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* mr = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += x[c] * mr[c];
    y[r] = acc;
  }
  return y;
}

// grad += outer(x, g): x indexes rows, g indexes cols.
inline void add_outer(Matrix& grad, const Vec& x, const Vec& g) {
  require(x.size() == grad.rows && g.size() == grad.cols, "add_outer shape");
  for (std::size_t r = 0; r < grad.rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    double* gr = grad.row(r);
    for (std::size_t c = 0; c < grad.cols; ++c) gr[c] += xr * g[c];
  }
}

inline double dot(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), "dot shape");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// y += s * x
inline void axpy(Vec& y, double s, const Vec& x) {
  require(y.size() == x.size(), "axpy shape");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline void add_scaled(Matrix& dst, double s, const Matrix& src) {
  require(dst.same_shape(src), "add_scaled shape");
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += s * src.data[i];
}

inline Vec concat(const Vec& a, const Vec& b) {
  Vec out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline double squared_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data) acc += v * v;
  return acc;
}

}  // namespace taco
