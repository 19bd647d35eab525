#include "osa/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace osa::linalg {

namespace {

// Applies the Householder reflector (v, vnorm2) living in rows k..n-1 to
// column j of m.
void apply_reflector(Matrix& m, const std::vector<double>& v, double vnorm2,
                     std::size_t k, std::size_t j) {
  const std::size_t n = m.rows();
  double w = 0.0;
  for (std::size_t i = k; i < n; ++i) w += v[i] * m(i, j);
  const double f = 2.0 * w / vnorm2;
  for (std::size_t i = k; i < n; ++i) m(i, j) -= f * v[i];
}

}  // namespace

QRResult reduced_qr(const Matrix& m) {
  detail::require(m.rows() >= m.cols(), "reduced_qr: requires rows >= cols");
  detail::require(m.is_finite(), "reduced_qr: non-finite input");
  const std::size_t n = m.rows(), c = m.cols();

  Matrix r(m);
  std::vector<std::vector<double>> vs(c);
  std::vector<double> vnorm2(c, 0.0);

  for (std::size_t k = 0; k < c; ++k) {
    double normx = 0.0;
    for (std::size_t i = k; i < n; ++i) normx += r(i, k) * r(i, k);
    normx = std::sqrt(normx);
    if (normx == 0.0) continue;  // zero column, reflector skipped

    const double alpha = r(k, k) >= 0.0 ? -normx : normx;
    std::vector<double> v(n, 0.0);
    for (std::size_t i = k; i < n; ++i) v[i] = r(i, k);
    v[k] -= alpha;
    double vn2 = 0.0;
    for (std::size_t i = k; i < n; ++i) vn2 += v[i] * v[i];
    if (vn2 == 0.0) continue;

    vs[k] = v;
    vnorm2[k] = vn2;
    for (std::size_t j = k; j < c; ++j) apply_reflector(r, v, vn2, k, j);
    r(k, k) = alpha;
    for (std::size_t i = k + 1; i < n; ++i) r(i, k) = 0.0;
  }

  Matrix q(n, c);
  for (std::size_t j = 0; j < c; ++j) q(j, j) = 1.0;
  for (std::size_t k = c; k-- > 0;) {
    if (vnorm2[k] == 0.0) continue;
    for (std::size_t j = 0; j < c; ++j) apply_reflector(q, vs[k], vnorm2[k], k, j);
  }

  // Sign convention: make the diagonal of r non-negative.
  QRResult out{std::move(q), Matrix(c, c)};
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = i; j < c; ++j) out.r(i, j) = r(i, j);
  for (std::size_t j = 0; j < c; ++j) {
    if (out.r(j, j) < 0.0) {
      for (std::size_t t = j; t < c; ++t) out.r(j, t) = -out.r(j, t);
      for (std::size_t i = 0; i < n; ++i) out.q(i, j) = -out.q(i, j);
    }
  }
  return out;
}

Matrix expm_small(const Matrix& a) {
  detail::require(a.rows() == a.cols(), "expm_small: requires a square matrix");
  detail::require(a.rows() <= 256, "expm_small: refuses n > 256");
  detail::require(a.is_finite(), "expm_small: non-finite input");
  const std::size_t n = a.rows();

  double norm1 = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double colsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) colsum += std::fabs(a(i, j));
    norm1 = std::max(norm1, colsum);
  }

  int squarings = 0;
  double scaled = norm1;
  while (scaled > 0.5) {
    scaled *= 0.5;
    ++squarings;
  }

  Matrix b(a);
  b *= std::ldexp(1.0, -squarings);

  Matrix x = Matrix::identity(n);
  Matrix term = Matrix::identity(n);
  for (int k = 1; k <= 18; ++k) {
    term = matmul(term, b);
    term *= 1.0 / k;
    x += term;
  }

  for (int s = 0; s < squarings; ++s) x = matmul(x, x);
  return x;
}

namespace {

constexpr double kJacobiTol = 1e-14;
constexpr int kJacobiMaxSweeps = 60;

// One-sided Jacobi on a (rows >= cols assumed favorable, but not required):
// rotates column pairs until the implicit Gram matrix is diagonal. v
// accumulates the right rotations when non-null.
void jacobi_columns(Matrix& a, Matrix* v) {
  const std::size_t n = a.rows(), m = a.cols();
  for (int sweep = 0; sweep < kJacobiMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          app += a(i, p) * a(i, p);
          aqq += a(i, q) * a(i, q);
          apq += a(i, p) * a(i, q);
        }
        if (app == 0.0 || aqq == 0.0) continue;
        if (std::fabs(apq) <= kJacobiTol * std::sqrt(app * aqq)) continue;
        rotated = true;

        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double ap = a(i, p), aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        if (v) {
          for (std::size_t i = 0; i < m; ++i) {
            const double vp = (*v)(i, p), vq = (*v)(i, q);
            (*v)(i, p) = c * vp - s * vq;
            (*v)(i, q) = s * vp + c * vq;
          }
        }
      }
    }
    if (!rotated) break;
  }
}

std::vector<std::size_t> order_descending(const std::vector<double>& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return s[i] > s[j]; });
  return idx;
}

}  // namespace

std::vector<double> singular_values(const Matrix& m) {
  detail::require(m.is_finite(), "singular_values: non-finite input");
  Matrix a = m.rows() >= m.cols() ? m : m.transpose();
  jacobi_columns(a, nullptr);
  std::vector<double> s(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) col += a(i, j) * a(i, j);
    s[j] = std::sqrt(col);
  }
  std::sort(s.begin(), s.end(), std::greater<double>());
  return s;
}

SVDResult svd(const Matrix& m) {
  detail::require(m.is_finite(), "svd: non-finite input");
  if (m.rows() < m.cols()) {
    SVDResult t = svd(m.transpose());
    return SVDResult{std::move(t.v), std::move(t.sigma), std::move(t.u)};
  }

  const std::size_t n = m.rows(), c = m.cols();
  Matrix a(m);
  Matrix v = Matrix::identity(c);
  jacobi_columns(a, &v);

  std::vector<double> s(c);
  for (std::size_t j = 0; j < c; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += a(i, j) * a(i, j);
    s[j] = std::sqrt(col);
  }

  const auto idx = order_descending(s);
  SVDResult out{Matrix(n, c), std::vector<double>(c), Matrix(c, c)};
  for (std::size_t j = 0; j < c; ++j) {
    const std::size_t src = idx[j];
    out.sigma[j] = s[src];
    for (std::size_t i = 0; i < c; ++i) out.v(i, j) = v(i, src);
    if (s[src] > 1e-290) {
      for (std::size_t i = 0; i < n; ++i) out.u(i, j) = a(i, src) / s[src];
    }
  }

  // Complete null-space columns of u orthonormally from canonical vectors.
  for (std::size_t j = 0; j < c; ++j) {
    if (out.sigma[j] > 1e-290) continue;
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<double> w(n, 0.0);
      w[t] = 1.0;
      for (std::size_t k = 0; k < c; ++k) {
        if (k == j) continue;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += out.u(i, k) * w[i];
        for (std::size_t i = 0; i < n; ++i) w[i] -= dot * out.u(i, k);
      }
      double wn = 0.0;
      for (double x : w) wn += x * x;
      wn = std::sqrt(wn);
      if (wn > 0.5) {
        for (std::size_t i = 0; i < n; ++i) out.u(i, j) = w[i] / wn;
        break;
      }
    }
  }
  return out;
}

double spectral_norm(const Matrix& m, double tol) {
  detail::require(m.is_finite(), "spectral_norm: non-finite input");
  detail::require(tol > 0.0, "spectral_norm: tol must be positive");
  if (m.max_abs() == 0.0) return 0.0;

  const std::size_t n = m.rows(), c = m.cols();
  std::vector<double> u(n, 0.0);
  double un = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double rowsum = 0.0;
    for (std::size_t j = 0; j < c; ++j) rowsum += m(i, j);
    u[i] = rowsum;
    un += rowsum * rowsum;
  }
  un = std::sqrt(un);
  if (un == 0.0) {
    std::fill(u.begin(), u.end(), 1.0 / std::sqrt(static_cast<double>(n)));
  } else {
    for (double& x : u) x /= un;
  }

  std::vector<double> v(c, 0.0), w(n, 0.0);
  double sigma = 0.0;
  for (int it = 0; it < 1000; ++it) {
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += m(i, j) * u[i];
      v[j] = s;
    }
    double vn = 0.0;
    for (double x : v) vn += x * x;
    vn = std::sqrt(vn);
    if (vn == 0.0) break;  // seed landed in the null space, use the oracle
    for (double& x : v) x /= vn;

    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += m(i, j) * v[j];
      w[i] = s;
    }
    double sn = 0.0;
    for (double x : w) sn += x * x;
    sn = std::sqrt(sn);
    if (sn == 0.0) break;
    for (std::size_t i = 0; i < n; ++i) u[i] = w[i] / sn;

    if (std::fabs(sn - sigma) <= 1e-3 * tol * sn) return sn;
    sigma = sn;
  }
  const auto s = singular_values(m);
  return s.empty() ? 0.0 : s.front();
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      if (aij == 0.0) continue;
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l)
          c(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return c;
}

Matrix commutation_matrix(std::size_t m, std::size_t n) {
  Matrix k(m * n, m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) k(i * n + j, j * m + i) = 1.0;
  return k;
}

}  // namespace osa::linalg
