#pragma once

// Slow reference implementations used only to cross-check library results.
// Kept deliberately naive and independent of the code under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "osa/matrix.hpp"

namespace testsupport {

// exp(a) by plain Taylor summation after halving a until ||a||_1 <= 0.25,
// then repeated squaring with the serial kernel. 50 terms leave truncation
// error far below double precision at that norm.
inline osa::Matrix expm_taylor(const osa::Matrix& a) {
  const std::size_t n = a.rows();
  double norm1 = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += std::fabs(a(i, j));
    norm1 = std::max(norm1, col);
  }
  int halvings = 0;
  while (norm1 > 0.25) {
    norm1 *= 0.5;
    ++halvings;
  }
  osa::Matrix b = a;
  b *= std::pow(0.5, halvings);

  osa::Matrix sum = osa::Matrix::identity(n);
  osa::Matrix term = osa::Matrix::identity(n);
  for (int k = 1; k <= 50; ++k) {
    term = osa::ref::matmul(term, b);
    term *= 1.0 / k;
    sum += term;
  }
  for (int k = 0; k < halvings; ++k) sum = osa::ref::matmul(sum, sum);
  return sum;
}

// Determinant by Gaussian elimination with partial pivoting.
inline double det(osa::Matrix a) {
  const std::size_t n = a.rows();
  double d = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::fabs(a(i, k)) > std::fabs(a(piv, k))) piv = i;
    if (a(piv, k) == 0.0) return 0.0;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(piv, j), a(k, j));
      d = -d;
    }
    d *= a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
    }
  }
  return d;
}

inline bool upper_triangular(const osa::Matrix& r, double tol) {
  for (std::size_t i = 1; i < r.rows(); ++i)
    for (std::size_t j = 0; j < std::min(i, r.cols()); ++j)
      if (std::fabs(r(i, j)) > tol) return false;
  return true;
}

// Scalar polar recurrence x <- x (3 - x^2) / 2, the trajectory every
// singular value follows under the iteration.
inline double polar_scalar(double x, int iters) {
  for (int k = 0; k < iters; ++k) x = 0.5 * x * (3.0 - x * x);
  return x;
}

inline osa::Matrix permutation_matrix(const std::vector<std::size_t>& perm) {
  osa::Matrix p(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) p(i, perm[i]) = 1.0;
  return p;
}

}  // namespace testsupport
