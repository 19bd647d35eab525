#include "osa/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace osa {

namespace detail {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace detail

namespace alloc_tracker {

namespace {
thread_local bool g_active = false;
thread_local std::size_t g_live = 0;
thread_local std::size_t g_peak = 0;
}  // namespace

void reset() {
  g_live = 0;
  g_peak = 0;
}

void enable(bool on) { g_active = on; }

std::size_t peak_bytes() { return g_peak; }

namespace {
void on_alloc(std::size_t bytes) {
  if (!g_active) return;
  g_live += bytes;
  g_peak = std::max(g_peak, g_live);
}

void on_free(std::size_t bytes) {
  if (!g_active) return;
  g_live -= std::min(g_live, bytes);
}
}  // namespace

}  // namespace alloc_tracker

namespace {
std::size_t payload_bytes(std::size_t entries) { return entries * sizeof(double); }
}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
  alloc_tracker::on_alloc(payload_bytes(data_.size()));
}

Matrix::Matrix(const Matrix& other)
    : rows_(other.rows_), cols_(other.cols_), data_(other.data_) {
  alloc_tracker::on_alloc(payload_bytes(data_.size()));
}

Matrix::Matrix(Matrix&& other) noexcept
    : rows_(other.rows_), cols_(other.cols_), data_(std::move(other.data_)) {
  other.rows_ = 0;
  other.cols_ = 0;
  other.data_.clear();
}

Matrix& Matrix::operator=(const Matrix& other) {
  if (this == &other) return *this;
  alloc_tracker::on_free(payload_bytes(data_.size()));
  rows_ = other.rows_;
  cols_ = other.cols_;
  data_ = other.data_;
  alloc_tracker::on_alloc(payload_bytes(data_.size()));
  return *this;
}

Matrix& Matrix::operator=(Matrix&& other) noexcept {
  if (this == &other) return *this;
  alloc_tracker::on_free(payload_bytes(data_.size()));
  rows_ = other.rows_;
  cols_ = other.cols_;
  data_ = std::move(other.data_);
  other.rows_ = 0;
  other.cols_ = 0;
  other.data_.clear();
  return *this;
}

Matrix::~Matrix() { alloc_tracker::on_free(payload_bytes(data_.size())); }

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

bool Matrix::is_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  detail::require(rows_ == other.rows_ && cols_ == other.cols_, "matrix add: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  detail::require(rows_ == other.rows_ && cols_ == other.cols_, "matrix sub: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  Matrix c(a);
  c += b;
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  Matrix c(a);
  c -= b;
  return c;
}

Matrix operator*(double s, const Matrix& m) {
  Matrix c(m);
  c *= s;
  return c;
}

namespace {

// Work threshold below which the parallel loop is not worth spawning.
constexpr std::size_t kMinParallelFlops = 1u << 16;

// Each output row is accumulated by a single thread in a fixed k, j order,
// so results are bitwise identical to the serial reference at any thread count.
void matmul_rows(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), kk = a.cols(), m = b.cols();
  const bool par = n * kk * m >= kMinParallelFlops;
#pragma omp parallel for schedule(static) if (par)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const double* arow = a.data() + static_cast<std::size_t>(i) * kk;
    double* crow = c.data() + static_cast<std::size_t>(i) * m;
    for (std::size_t k = 0; k < kk; ++k) {
      const double aik = arow[k];
      const double* brow = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix c(a.rows(), b.cols());
  matmul_rows(a, b, c);
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  detail::require(a.rows() == b.rows(), "matmul_tn: inner dimension mismatch");
  const std::size_t n = a.cols(), kk = a.rows(), m = b.cols();
  Matrix c(n, m);
  const bool par = n * kk * m >= kMinParallelFlops;
#pragma omp parallel for schedule(static) if (par)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    double* crow = c.data() + static_cast<std::size_t>(i) * m;
    for (std::size_t k = 0; k < kk; ++k) {
      const double aki = a(k, static_cast<std::size_t>(i));
      const double* brow = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  detail::require(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  const std::size_t n = a.rows(), kk = a.cols(), m = b.rows();
  Matrix c(n, m);
  const bool par = n * kk * m >= kMinParallelFlops;
#pragma omp parallel for schedule(static) if (par)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    const double* arow = a.data() + static_cast<std::size_t>(i) * kk;
    double* crow = c.data() + static_cast<std::size_t>(i) * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b.data() + j * kk;
      double s = 0.0;
      for (std::size_t k = 0; k < kk; ++k) s += arow[k] * brow[k];
      crow[j] = s;
    }
  }
  return c;
}

namespace ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  const std::size_t n = a.rows(), kk = a.cols(), m = b.cols();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.data() + i * kk;
    double* crow = c.data() + i * m;
    for (std::size_t k = 0; k < kk; ++k) {
      const double aik = arow[k];
      const double* brow = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

}  // namespace ref

Matrix vec(const Matrix& m) {
  Matrix v(m.rows() * m.cols(), 1);
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < m.rows(); ++i) v(j * m.rows() + i, 0) = m(i, j);
  return v;
}

Matrix unvec(const Matrix& v, std::size_t rows, std::size_t cols) {
  detail::require(v.cols() == 1 && v.rows() == rows * cols, "unvec: length mismatch");
  Matrix m(rows, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = v(j * rows + i, 0);
  return m;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  detail::require(a.rows() == b.rows(), "hconcat: row count mismatch");
  Matrix c(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.cols(); ++j) c(i, a.cols() + j) = b(i, j);
  }
  return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::fabs(a(i, j) - b(i, j)));
  return m;
}

}  // namespace osa
