#pragma once

#include <cstddef>
#include <vector>

namespace osa {

// Dense real matrix, row-major storage.
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(const Matrix& other);
  Matrix(Matrix&& other) noexcept;
  Matrix& operator=(const Matrix& other);
  Matrix& operator=(Matrix&& other) noexcept;
  ~Matrix();

  static Matrix identity(std::size_t n);
  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return rows_ * cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  Matrix transpose() const;
  double frobenius_norm() const;
  double max_abs() const;
  bool is_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);

// c = a * b. Parallelized over rows of a when the product is large enough.
Matrix matmul(const Matrix& a, const Matrix& b);
// c = a^T * b and c = a * b^T without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

namespace ref {
// Serial reference kernel, same per-element accumulation order as matmul.
Matrix matmul(const Matrix& a, const Matrix& b);
}  // namespace ref

// Column-stacking vec and its inverse. Storage is row-major; vec semantics
// stay column-dominant and independent of the layout.
Matrix vec(const Matrix& m);
Matrix unvec(const Matrix& v, std::size_t rows, std::size_t cols);

Matrix hconcat(const Matrix& a, const Matrix& b);

double max_abs_diff(const Matrix& a, const Matrix& b);

// Accounting for working-buffer sizes, used by the scaling benchmark.
// Counts logical bytes of live Matrix payloads on the calling thread.
namespace alloc_tracker {
void reset();
void enable(bool on);
std::size_t peak_bytes();
}  // namespace alloc_tracker

namespace detail {
void require(bool cond, const char* what);
}  // namespace detail

}  // namespace osa
