// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace roskd {

// Dense row-major matrix of doubles. Just enough linear algebra for
// mini-batch MLP training; no views, no expression templates.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }
};

// out = a * b, a is m x k, b is k x n.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    double* orow = out.data.data() + i * out.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// out = a^T * b, a is m x k, b is m x n -> k x n.
inline Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_at_b: row counts differ");
  Matrix out(a.cols, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    const double* brow = b.data.data() + i * b.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      double* orow = out.data.data() + k * out.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// out = a * b^T, a is m x k, b is n x k -> m x n.
inline Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_a_bt: column counts differ");
  Matrix out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    double* orow = out.data.data() + i * out.cols;
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.data.data() + j * b.cols;
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      orow[j] = acc;
    }
  }
  return out;
}

}  // namespace roskd
