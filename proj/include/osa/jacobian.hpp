#pragma once

#include "osa/attention.hpp"
#include "osa/basis.hpp"
#include "osa/matrix.hpp"

namespace osa::jacobian {

// Dense Jacobian paths refuse inputs with more than this many entries.
constexpr std::size_t kMaxDenseDim = 512;

struct JacobianReport {
  std::size_t n_tokens = 0;
  std::size_t d = 0;
  double alpha = 0.0;
  double sigma_max = 0.0;
  double sigma_min_pos = 0.0;
  double kappa_eff = 0.0;
  double j1_norm = 0.0;
  double fd_max_abs_err = 0.0;
  double delta_hat = 0.0;
};

// Directional derivative of the head forward map at x in direction dx.
// The Newton-Schulz branch differentiates the pre-normalization and the polar
// iteration in closed form; the QR branch differentiates the basis map by
// central differences with a step of 1e-6 relative to ||m||_F.
Matrix osa_jvp(const Matrix& x, const Matrix& dx, const attention::OSAHeadParams& p,
               const basis::BasisMethod& method);

// Frechet derivative of the matrix exponential at a in direction e, read off
// the top-right block of exp([[a, e], [0, a]]).
Matrix expm_frechet(const Matrix& a, const Matrix& e);

// The value-path Jacobian term (w_v w_o)^T (kron) A as a dense nd x nd matrix
// acting on column-stacked vec(x). Diagnostic scale only (n*d <= 512).
Matrix j2_exact(const Matrix& x, const attention::OSAHeadParams& p,
                const basis::BasisMethod& method);

// Full Jacobian assembled column-by-column from osa_jvp on coordinate
// directions. Columns are independent and computed in parallel.
Matrix jacobian_full(const Matrix& x, const attention::OSAHeadParams& p,
                     const basis::BasisMethod& method);

// Central-difference Jacobian with the given coordinate step.
Matrix jacobian_fd(const Matrix& x, const attention::OSAHeadParams& p,
                   const basis::BasisMethod& method, double step);

double default_fd_step(const Matrix& x);

// d vec(S) / d vec(X) for the dense skew score, assembled from the coupling
// w_q w_k^T - w_k w_q^T and the commutation matrix.
Matrix ds_dx_exact(const Matrix& x, const attention::OSAHeadParams& p);

// Assembles jacobian_full, j2_exact and the finite-difference cross-check and
// summarizes conditioning. kappa_eff divides sigma_max by the smallest
// singular value above rank_tol * sigma_max.
JacobianReport condition_report(const Matrix& x, const attention::OSAHeadParams& p,
                                const basis::BasisMethod& method, double rank_tol = 1e-7);

// condition_report plus the raw spectra it was derived from, for callers that
// compare the full Jacobian against the value-path term index by index.
struct ConditionDetail {
  JacobianReport report;
  std::vector<double> sigma_j;
  std::vector<double> sigma_j2;
};

ConditionDetail condition_detail(const Matrix& x, const attention::OSAHeadParams& p,
                                 const basis::BasisMethod& method, double rank_tol = 1e-7);

}  // namespace osa::jacobian
