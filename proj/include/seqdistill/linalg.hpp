// Dense row-major matrix and the handful of vector kernels the models need.
// Everything is plain double on std::vector; shapes are checked at the call
// sites that own a named contract (see rnn_rbm::unroll).
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "seqdistill/error.hpp"

namespace seqdistill {

using Vec = std::vector<double>;

class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return a_[i * cols_ + j];
  }

  Vec& flat() { return a_; }
  const Vec& flat() const { return a_; }

  bool same_shape(const Mat& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec a_;
};

// y = M x
inline Vec matvec(const Mat& m, const Vec& x) {
  Vec y(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) acc += m(i, j) * x[j];
    y[i] = acc;
  }
  return y;
}

// y = Mᵀ x
inline Vec matvec_t(const Mat& m, const Vec& x) {
  Vec y(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double xi = x[i];
    for (std::size_t j = 0; j < m.cols(); ++j) y[j] += m(i, j) * xi;
  }
  return y;
}

// M += scale · x yᵀ
inline void add_outer(Mat& m, const Vec& x, const Vec& y, double scale = 1.0) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double xi = scale * x[i];
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += xi * y[j];
  }
}

inline void axpy(Vec& y, double a, const Vec& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline double dot(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline void check_dims(bool ok, const std::string& what) {
  if (!ok) fail_validation("dimension mismatch: " + what);
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.flat()); }

}  // namespace seqdistill
