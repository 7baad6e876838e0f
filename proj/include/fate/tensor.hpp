#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "fate/common.hpp"

namespace fate {

// Dense row-major matrix of doubles. Row vectors are the working convention
// throughout: states are rows of an N x H matrix and weights multiply on the
// right.
class Tensor {
 public:
  Tensor() = default;
  Tensor(size_t rows, size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double& operator()(size_t r, size_t c) { return v_[r * cols_ + c]; }
  double operator()(size_t r, size_t c) const { return v_[r * cols_ + c]; }
  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  double* row(size_t r) { return v_.data() + r * cols_; }
  const double* row(size_t r) const { return v_.data() + r * cols_; }

  void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool all_finite() const {
    double acc = 0.0;
    for (double x : v_) acc += x;
    return std::isfinite(acc);
  }

 private:
  size_t rows_ = 0, cols_ = 0;
  std::vector<double> v_;
};

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw NumericError("matmul: shape mismatch");
  Tensor c(a.rows(), b.cols());
  for (size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (size_t k = 0; k < a.cols(); ++k) {
      double av = ar[k];
      if (av == 0.0) continue;
      const double* br = b.row(k);
      for (size_t j = 0; j < b.cols(); ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

inline Tensor transpose(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (size_t i = 0; i < a.rows(); ++i)
    for (size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// y += alpha * x, elementwise.
inline void axpy(Tensor& y, double alpha, const Tensor& x) {
  if (!y.same_shape(x)) throw NumericError("axpy: shape mismatch");
  double* yd = y.data();
  const double* xd = x.data();
  for (size_t i = 0; i < y.size(); ++i) yd[i] += alpha * xd[i];
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw NumericError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         (a.size() == 0 ||
          std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

}  // namespace fate
