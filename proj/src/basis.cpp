#include "osa/basis.hpp"

#include <cmath>

#include "osa/linalg.hpp"

namespace osa::basis {

Matrix build_m(const Matrix& q, const Matrix& k) {
  detail::require(q.rows() == k.rows() && q.cols() == k.cols(),
                  "build_m: query and key blocks must share a shape");
  return hconcat(q, k);
}

Matrix ns_iterate(Matrix m0, int iters) {
  detail::require(iters >= 0, "ns_iterate: negative iteration count");
  const std::size_t r = m0.cols();
  const Matrix eye3 = 3.0 * Matrix::identity(r);
  for (int k = 0; k < iters; ++k) {
    Matrix gram = matmul_tn(m0, m0);
    Matrix inner = eye3 - gram;
    m0 = matmul(m0, inner);
    m0 *= 0.5;
  }
  return m0;
}

namespace {

BasisDiagnostics diagnose(const Matrix& b, BasisMethod method, double prenorm_scale) {
  BasisDiagnostics d;
  d.method = method;
  d.r = b.cols();
  d.prenorm_scale = prenorm_scale;
  Matrix gram = matmul_tn(b, b);
  d.ortho_residual = linalg::spectral_norm(gram - Matrix::identity(b.cols()));
  const auto sv = linalg::singular_values(b);
  d.max_sv = sv.empty() ? 0.0 : sv.front();
  d.min_sv = sv.empty() ? 0.0 : sv.back();
  return d;
}

}  // namespace

BasisResult newton_schulz_basis(const Matrix& m, int iters, double eps) {
  detail::require(eps > 0.0, "newton_schulz_basis: eps must be positive");
  detail::require(iters >= 0, "newton_schulz_basis: negative iteration count");
  detail::require(m.is_finite(), "newton_schulz_basis: non-finite input");
  const double scale = m.frobenius_norm() + eps;
  Matrix m0(m);
  m0 *= 1.0 / scale;
  Matrix b = ns_iterate(std::move(m0), iters);
  BasisDiagnostics diag = diagnose(b, BasisMethod::newton_schulz(iters, eps), scale);
  return BasisResult{std::move(b), std::move(diag)};
}

BasisResult qr_basis(const Matrix& m) {
  detail::require(m.is_finite(), "qr_basis: non-finite input");
  auto qr = linalg::reduced_qr(m);
  BasisDiagnostics diag = diagnose(qr.q, BasisMethod::qr(), 1.0);
  return BasisResult{std::move(qr.q), std::move(diag)};
}

BasisResult compute_basis(const Matrix& m, const BasisMethod& method) {
  if (method.kind == BasisKind::QR) return qr_basis(m);
  return newton_schulz_basis(m, method.ns_iters, method.eps);
}

OrthoBound ortho_error_bound(double s_spectral_norm,
                             const std::vector<double>& b_singular_values) {
  detail::require(s_spectral_norm >= 0.0 && std::isfinite(s_spectral_norm),
                  "ortho_error_bound: invalid spectral norm");
  const double em1 = std::expm1(s_spectral_norm);
  double factor = 0.0;
  for (double s : b_singular_values) {
    detail::require(s >= 0.0 && std::isfinite(s), "ortho_error_bound: invalid singular value");
    const double s2 = s * s;
    factor = std::max(factor, std::fabs(s2 * (s2 - 1.0)));
  }
  return OrthoBound{em1 * em1 * factor, 0.25 * em1 * em1};
}

double measured_ortho_error(const Matrix& b, const Matrix& exp_s_small) {
  const std::size_t r = b.cols();
  detail::require(exp_s_small.rows() == r && exp_s_small.cols() == r,
                  "measured_ortho_error: core dimension mismatch");
  Matrix delta = exp_s_small - Matrix::identity(r);
  Matrix e = matmul_tn(b, b) - Matrix::identity(r);
  Matrix core = matmul_tn(delta, matmul(e, delta));
  if (core.max_abs() == 0.0) return 0.0;

  if (b.rows() >= b.cols()) {
    // b = q rf: ||b core b^T|| = ||rf core rf^T||, an r x r problem.
    Matrix rf = linalg::reduced_qr(b).r;
    return linalg::spectral_norm(matmul_nt(matmul(rf, core), rf));
  }
  // Wide b: factor through b^T = q rf instead, leaving an N x N problem.
  auto qr = linalg::reduced_qr(b.transpose());
  Matrix mid = matmul_tn(qr.q, matmul(core, qr.q));
  return linalg::spectral_norm(matmul_tn(qr.r, matmul(mid, qr.r)));
}

}  // namespace osa::basis
