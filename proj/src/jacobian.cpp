#include "osa/jacobian.hpp"

#include <cmath>

#include "osa/linalg.hpp"

namespace osa::jacobian {

namespace {

struct BasisWithTangent {
  Matrix b;
  Matrix db;
};

BasisWithTangent qr_basis_tangent(const Matrix& m, const Matrix& dm) {
  BasisWithTangent out;
  out.b = linalg::reduced_qr(m).q;
  const double ndm = dm.frobenius_norm();
  if (ndm == 0.0) {
    out.db = Matrix(out.b.rows(), out.b.cols());
    return out;
  }
  const double nm = m.frobenius_norm();
  const double h = 1e-6 * (nm > 0.0 ? nm : 1.0) / ndm;
  Matrix step(dm);
  step *= h;
  Matrix bp = linalg::reduced_qr(m + step).q;
  Matrix bm = linalg::reduced_qr(m - step).q;
  out.db = bp - bm;
  out.db *= 1.0 / (2.0 * h);
  return out;
}

BasisWithTangent ns_basis_tangent(const Matrix& m, const Matrix& dm, int iters, double eps) {
  const double nm = m.frobenius_norm();
  const double scale = nm + eps;

  Matrix b(m);
  b *= 1.0 / scale;
  Matrix db;
  if (nm == 0.0) {
    db = Matrix(dm);
    db *= 1.0 / eps;
  } else {
    double inner = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) inner += m(i, j) * dm(i, j);
    const double dscale = inner / nm;
    db = dm - (dscale / scale) * m;
    db *= 1.0 / scale;
  }

  const std::size_t r = b.cols();
  const Matrix eye3 = 3.0 * Matrix::identity(r);
  for (int k = 0; k < iters; ++k) {
    Matrix gram = matmul_tn(b, b);
    Matrix dgram = matmul_tn(db, b) + matmul_tn(b, db);
    Matrix inner = eye3 - gram;
    Matrix nb = matmul(b, inner);
    nb *= 0.5;
    Matrix ndb = matmul(db, inner) - matmul(b, dgram);
    ndb *= 0.5;
    b = std::move(nb);
    db = std::move(ndb);
  }
  return BasisWithTangent{std::move(b), std::move(db)};
}

}  // namespace

Matrix expm_frechet(const Matrix& a, const Matrix& e) {
  detail::require(a.rows() == a.cols() && e.rows() == e.cols() && a.rows() == e.rows(),
                  "expm_frechet: base and direction must be square and matching");
  const std::size_t r = a.rows();
  const double ne = e.frobenius_norm();
  if (ne == 0.0) return Matrix(r, r);

  // Scale the direction to unit size for conditioning; the map is linear in e.
  Matrix block(2 * r, 2 * r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      block(i, j) = a(i, j);
      block(r + i, r + j) = a(i, j);
      block(i, r + j) = e(i, j) / ne;
    }
  Matrix big = linalg::expm_small(block);
  Matrix out(r, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) out(i, j) = ne * big(i, r + j);
  return out;
}

Matrix osa_jvp(const Matrix& x, const Matrix& dx, const attention::OSAHeadParams& p,
               const basis::BasisMethod& method) {
  detail::require(dx.rows() == x.rows() && dx.cols() == x.cols(),
                  "osa_jvp: direction shape mismatch");
  detail::require(x.is_finite() && dx.is_finite(), "osa_jvp: non-finite input");

  Matrix q = matmul(x, p.w_q);
  Matrix k = matmul(x, p.w_k);
  Matrix dq = matmul(dx, p.w_q);
  Matrix dk = matmul(dx, p.w_k);
  Matrix m = basis::build_m(q, k);
  Matrix dm = basis::build_m(dq, dk);

  BasisWithTangent bt = method.kind == basis::BasisKind::QR
                            ? qr_basis_tangent(m, dm)
                            : ns_basis_tangent(m, dm, method.ns_iters, method.eps);

  const double c = p.alpha / std::sqrt(static_cast<double>(p.w_q.cols()));
  Matrix u = matmul_tn(bt.b, q);
  Matrix v = matmul_tn(bt.b, k);
  Matrix du = matmul_tn(bt.db, q) + matmul_tn(bt.b, dq);
  Matrix dv = matmul_tn(bt.db, k) + matmul_tn(bt.b, dk);

  Matrix raw = matmul_nt(u, v);
  Matrix draw = matmul_nt(du, v) + matmul_nt(u, dv);
  Matrix s = raw - raw.transpose();
  s *= c;
  Matrix ds = draw - draw.transpose();
  ds *= c;

  Matrix skew = s - s.transpose();
  skew *= 0.5;
  Matrix dskew = ds - ds.transpose();
  dskew *= 0.5;

  Matrix es = linalg::expm_small(skew);
  Matrix des = expm_frechet(skew, dskew);

  Matrix f = matmul(p.w_v, p.w_o);
  Matrix z = matmul(x, f);
  Matrix dz = matmul(dx, f);

  Matrix core = es - Matrix::identity(es.rows());
  Matrix t = matmul_tn(bt.b, z);
  Matrix dt = matmul_tn(bt.db, z) + matmul_tn(bt.b, dz);
  Matrix w = matmul(core, t);
  Matrix dw = matmul(des, t) + matmul(core, dt);

  return dz + matmul(bt.db, w) + matmul(bt.b, dw);
}

namespace {

Matrix coordinate_direction(std::size_t n, std::size_t d, std::size_t flat) {
  // flat indexes vec(x) column-major: entry (flat % n, flat / n).
  Matrix e(n, d);
  e(flat % n, flat / n) = 1.0;
  return e;
}

}  // namespace

Matrix j2_exact(const Matrix& x, const attention::OSAHeadParams& p,
                const basis::BasisMethod& method) {
  detail::require(x.size() <= kMaxDenseDim, "j2_exact: refuses n*d > 512");
  attention::LowRankAttention att = attention::score_matrix_small(x, p, method);
  Matrix a = attention::materialize_attention(att);
  Matrix f = matmul(p.w_v, p.w_o);
  return linalg::kron(f.transpose(), a);
}

Matrix jacobian_full(const Matrix& x, const attention::OSAHeadParams& p,
                     const basis::BasisMethod& method) {
  detail::require(x.size() <= kMaxDenseDim, "jacobian_full: refuses n*d > 512");
  const std::size_t n = x.rows(), d = x.cols(), nd = n * d;
  Matrix j(nd, nd);
#pragma omp parallel for schedule(dynamic)
  for (long long col = 0; col < static_cast<long long>(nd); ++col) {
    Matrix dir = coordinate_direction(n, d, static_cast<std::size_t>(col));
    Matrix dout = osa_jvp(x, dir, p, method);
    for (std::size_t jj = 0; jj < d; ++jj)
      for (std::size_t ii = 0; ii < n; ++ii)
        j(jj * n + ii, static_cast<std::size_t>(col)) = dout(ii, jj);
  }
  return j;
}

Matrix jacobian_fd(const Matrix& x, const attention::OSAHeadParams& p,
                   const basis::BasisMethod& method, double step) {
  detail::require(step > 0.0 && std::isfinite(step), "jacobian_fd: invalid step");
  detail::require(x.size() <= kMaxDenseDim, "jacobian_fd: refuses n*d > 512");
  const std::size_t n = x.rows(), d = x.cols(), nd = n * d;
  Matrix j(nd, nd);
#pragma omp parallel for schedule(dynamic)
  for (long long col = 0; col < static_cast<long long>(nd); ++col) {
    Matrix dir = coordinate_direction(n, d, static_cast<std::size_t>(col));
    dir *= step;
    Matrix fp = attention::osa_head_forward(x + dir, p, method);
    Matrix fm = attention::osa_head_forward(x - dir, p, method);
    const double inv = 1.0 / (2.0 * step);
    for (std::size_t jj = 0; jj < d; ++jj)
      for (std::size_t ii = 0; ii < n; ++ii)
        j(jj * n + ii, static_cast<std::size_t>(col)) = (fp(ii, jj) - fm(ii, jj)) * inv;
  }
  return j;
}

double default_fd_step(const Matrix& x) {
  return 1e-5 * std::max(1.0, x.frobenius_norm());
}

Matrix ds_dx_exact(const Matrix& x, const attention::OSAHeadParams& p) {
  detail::require(x.size() <= kMaxDenseDim, "ds_dx_exact: refuses n*d > 512");
  const std::size_t n = x.rows();
  const double c = p.alpha / std::sqrt(static_cast<double>(p.w_q.cols()));

  Matrix wt = matmul_nt(p.w_q, p.w_k) - matmul_nt(p.w_k, p.w_q);
  Matrix xwt_t = matmul_nt(x, wt);  // x wt^T
  Matrix xwt = matmul(x, wt);

  Matrix term1 = linalg::kron(xwt_t, Matrix::identity(n));
  Matrix term2 = matmul(linalg::kron(Matrix::identity(n), xwt),
                        linalg::commutation_matrix(n, x.cols()));
  Matrix out = term1 + term2;
  out *= c;
  return out;
}

ConditionDetail condition_detail(const Matrix& x, const attention::OSAHeadParams& p,
                                 const basis::BasisMethod& method, double rank_tol) {
  detail::require(rank_tol > 0.0 && rank_tol < 1.0, "condition_detail: invalid rank_tol");
  ConditionDetail out;
  JacobianReport& rep = out.report;
  rep.n_tokens = x.rows();
  rep.d = x.cols();
  rep.alpha = p.alpha;

  Matrix j = jacobian_full(x, p, method);
  Matrix j2 = j2_exact(x, p, method);

  out.sigma_j = linalg::singular_values(j);
  out.sigma_j2 = linalg::singular_values(j2);
  const auto& sv = out.sigma_j;
  rep.sigma_max = sv.empty() ? 0.0 : sv.front();
  const double cut = rank_tol * rep.sigma_max;
  rep.sigma_min_pos = 0.0;
  for (auto it = sv.rbegin(); it != sv.rend(); ++it) {
    if (*it > cut) {
      rep.sigma_min_pos = *it;
      break;
    }
  }
  rep.kappa_eff = rep.sigma_min_pos > 0.0 ? rep.sigma_max / rep.sigma_min_pos : 1.0;

  rep.j1_norm = linalg::spectral_norm(j - j2);
  rep.fd_max_abs_err = max_abs_diff(j, jacobian_fd(x, p, method, default_fd_step(x)));

  attention::LowRankAttention att = attention::score_matrix_small(x, p, method);
  double dh = 0.0;
  for (double s : attention::attention_singular_values(att)) dh = std::max(dh, std::fabs(s - 1.0));
  rep.delta_hat = dh;
  return out;
}

JacobianReport condition_report(const Matrix& x, const attention::OSAHeadParams& p,
                                const basis::BasisMethod& method, double rank_tol) {
  return condition_detail(x, p, method, rank_tol).report;
}

}  // namespace osa::jacobian
