#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cpl {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. All model and index math runs in
/// 64-bit precision so gradient checks against finite differences are tight.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  Vec row_vec(std::size_t r) const { return Vec(row(r), row(r) + cols_); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Mat& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
  return dot(a.data(), b.data(), a.size());
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v.data(), v.data(), v.size())); }

/// m * x
inline Vec matvec(const Mat& m, const Vec& x) {
  if (m.cols() != x.size()) throw std::invalid_argument("dimension mismatch");
  Vec out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x.data(), m.cols());
  return out;
}

/// m^T * x
inline Vec matvec_t(const Mat& m, const Vec& x) {
  if (m.rows() != x.size()) throw std::invalid_argument("dimension mismatch");
  Vec out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* mr = m.row(r);
    const double xr = x[r];
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += mr[c] * xr;
  }
  return out;
}

/// y += a * x
inline void axpy(double a, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw std::invalid_argument("dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline Vec scaled(const Vec& v, double a) {
  Vec out(v);
  for (double& x : out) x *= a;
  return out;
}

}  // namespace cpl
