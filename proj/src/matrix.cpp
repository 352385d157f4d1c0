#include "n2c2/matrix.hpp"

#include <cassert>
#include <cmath>

namespace n2c2 {

std::vector<double> Matrix::multiply(std::span<const double> x) const {
  assert(x.size() == cols_);
  std::vector<double> y(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double* row = &data_[r * cols_];
    double acc = 0.0;
    for (std::size_t c = 0; c < cols_; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

std::vector<double> Matrix::multiply_transposed(std::span<const double> x) const {
  assert(x.size() == rows_);
  std::vector<double> y(cols_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double* row = &data_[r * cols_];
    for (std::size_t c = 0; c < cols_; ++c) y[c] += row[c] * x[r];
  }
  return y;
}

void Matrix::add_outer(std::span<const double> u, std::span<const double> v, double scale) {
  assert(u.size() == rows_ && v.size() == cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    const double ur = scale * u[r];
    if (ur == 0.0) continue;
    double* row = &data_[r * cols_];
    for (std::size_t c = 0; c < cols_; ++c) row[c] += ur * v[c];
  }
}

bool Matrix::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace n2c2
