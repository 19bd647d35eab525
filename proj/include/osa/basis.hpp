#pragma once

#include <vector>

#include "osa/matrix.hpp"

namespace osa::basis {

enum class BasisKind { QR, NewtonSchulz };

struct BasisMethod {
  BasisKind kind = BasisKind::QR;
  int ns_iters = 6;
  double eps = 1e-6;

  static BasisMethod qr() { return BasisMethod{BasisKind::QR, 0, 1e-6}; }
  static BasisMethod newton_schulz(int iters, double eps = 1e-6) {
    return BasisMethod{BasisKind::NewtonSchulz, iters, eps};
  }
};

struct BasisDiagnostics {
  BasisMethod method;
  std::size_t r = 0;
  double ortho_residual = 0.0;  // ||b^T b - I||_2
  double min_sv = 0.0;
  double max_sv = 0.0;
  double prenorm_scale = 1.0;  // ||m||_F + eps for Newton-Schulz, 1 for QR
};

struct BasisResult {
  Matrix b;
  BasisDiagnostics diag;
};

// Concatenates the query and key blocks, [q k], n x 2*d_v.
Matrix build_m(const Matrix& q, const Matrix& k);

// The polar iteration m <- m (3I - m^T m) / 2 run from a given start point.
// Every singular value follows x -> x (3 - x^2) / 2, so starts inside (0, 1]
// approach 1 monotonically from below.
Matrix ns_iterate(Matrix m0, int iters);

// Newton-Schulz basis: pre-normalizes by ||m||_F + eps (keeping every
// singular value strictly inside (0, 1)), then runs `iters` polar steps.
BasisResult newton_schulz_basis(const Matrix& m, int iters, double eps);

// Exact orthonormal basis from the reduced QR factor. Requires rows >= cols.
BasisResult qr_basis(const Matrix& m);

BasisResult compute_basis(const Matrix& m, const BasisMethod& method);

struct OrthoBound {
  double tight;
  double loose;
};

// Bounds on ||Y^T Y - I||_2 for Y = I + b (exp[S] - I) b^T given ||S||_2 and
// the singular values of b: tight uses max |sigma^2 (sigma^2 - 1)|, loose
// replaces that factor by its worst case 1/4 over sigma in [0, 1].
OrthoBound ortho_error_bound(double s_spectral_norm, const std::vector<double>& b_singular_values);

// Measured ||Y^T Y - I||_2 through the factored identity
// Y^T Y - I = b D^T E D b^T with D = exp_s_small - I and E = b^T b - I,
// evaluated with r x r cores only (plus one thin QR of b).
double measured_ortho_error(const Matrix& b, const Matrix& exp_s_small);

}  // namespace osa::basis
