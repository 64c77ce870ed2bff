#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hgnn/error.hpp"

namespace hgnn {

// Dense row-major matrix of doubles. The single numeric container used for
// node/edge attribute matrices, MLP weights and gradients.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(int64_t rows, int64_t cols)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows * cols), 0.0) {
    if (rows < 0 || cols < 0) throw ShapeError("Tensor2D: negative dimension");
  }

  static Tensor2D zeros(int64_t rows, int64_t cols) { return Tensor2D(rows, cols); }

  int64_t rows() const { return rows_; }
  int64_t cols() const { return cols_; }
  int64_t size() const { return rows_ * cols_; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(int64_t i) { return data_.data() + i * cols_; }
  const double* row(int64_t i) const { return data_.data() + i * cols_; }

  double& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * cols_ + j)]; }
  double at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * cols_ + j)]; }

  bool same_shape(const Tensor2D& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  void require_shape(int64_t r, int64_t c, const char* what) const {
    if (rows_ != r || cols_ != c)
      throw ShapeError(std::string(what) + ": expected " + std::to_string(r) + "x" +
                       std::to_string(c) + ", got " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Tensor2D& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  int64_t rows_ = 0;
  int64_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace hgnn
