#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace n2c2 {

// Dense row-major matrix of doubles. Just enough linear algebra for the
// one- and two-layer networks in this project.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  // y = A x
  std::vector<double> multiply(std::span<const double> x) const;
  // y = A^T x
  std::vector<double> multiply_transposed(std::span<const double> x) const;

  // A += scale * u v^T
  void add_outer(std::span<const double> u, std::span<const double> v, double scale = 1.0);

  bool all_finite() const;
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace n2c2
