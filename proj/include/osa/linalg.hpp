#pragma once

#include <vector>

#include "osa/matrix.hpp"

namespace osa::linalg {

struct QRResult {
  Matrix q;  // rows x cols, orthonormal columns
  Matrix r;  // cols x cols, upper triangular, non-negative diagonal
};

struct SVDResult {
  Matrix u;
  std::vector<double> sigma;  // non-increasing
  Matrix v;
};

// Householder QR, reduced form. Requires rows >= cols. The diagonal of r is
// forced non-negative by flipping column signs of q, so the factorization is
// unique for full-rank input. Zero diagonal entries are left untouched.
QRResult reduced_qr(const Matrix& m);

// Matrix exponential by scaling and squaring: the argument is scaled until its
// 1-norm is at most 0.5, run through a fixed 18-term Taylor core, then squared
// back. Intended for the small restricted matrices; refuses n > 256.
Matrix expm_small(const Matrix& a);

// Singular values by one-sided Jacobi on the taller orientation, sorted
// non-increasing. Sweeps stop when every off-diagonal Gram entry is below
// 1e-14 relative, or after 60 sweeps.
std::vector<double> singular_values(const Matrix& m);

// Full reduced SVD via the same one-sided Jacobi. Null-space columns of u are
// completed orthonormally so u always has orthonormal columns.
SVDResult svd(const Matrix& m);

// Largest singular value by alternating power iteration, seeded with the
// normalized row-sum vector. Falls back to the Jacobi SVD if 1000 iterations
// do not converge to the requested relative tolerance.
double spectral_norm(const Matrix& m, double tol = 1e-10);

Matrix kron(const Matrix& a, const Matrix& b);

// Permutation with commutation_matrix(m, n) * vec(B) == vec(B^T) for B m x n,
// vec taken column-major.
Matrix commutation_matrix(std::size_t m, std::size_t n);

}  // namespace osa::linalg
