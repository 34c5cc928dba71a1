#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace g2l {

// Dense row-major matrix of doubles. Throughout the codebase rows index
// channels/classes and columns index time frames, so the innermost loops walk
// contiguous memory along time.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double* row(std::size_t r) {
    assert(r < rows_);
    return data_.data() + r * cols_;
  }
  const double* row(std::size_t r) const {
    assert(r < rows_);
    return data_.data() + r * cols_;
  }

  double& at(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double at(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v) { data_.assign(data_.size(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace g2l
