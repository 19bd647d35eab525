#include "osa/oracle.hpp"

#include <cmath>

#include "osa/linalg.hpp"

namespace osa::oracle {

Matrix dense_score_matrix(const Matrix& x, const attention::OSAHeadParams& p) {
  Matrix q = matmul(x, p.w_q);
  Matrix k = matmul(x, p.w_k);
  Matrix s = matmul_nt(q, k) - matmul_nt(k, q);
  s *= p.alpha / std::sqrt(static_cast<double>(p.w_q.cols()));
  return s;
}

Matrix dense_attention_operator(const Matrix& x, const attention::OSAHeadParams& p) {
  detail::require(x.rows() <= 64, "dense_attention_operator: refuses n > 64");
  return linalg::expm_small(dense_score_matrix(x, p));
}

std::vector<std::pair<double, double>> gauss_legendre(int n) {
  detail::require(n >= 1, "gauss_legendre: needs at least one node");
  std::vector<std::pair<double, double>> out(n);
  for (int i = 0; i < n; ++i) {
    // Newton iteration on P_n from the Chebyshev-like initial guess.
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // Map from [-1, 1] (descending nodes) to [0, 1].
    out[n - 1 - i] = {0.5 * (x + 1.0), 0.5 * w};
  }
  return out;
}

Matrix frechet_quadrature(const Matrix& a, const Matrix& e, int points) {
  detail::require(a.rows() == a.cols() && e.rows() == e.rows() && a.rows() == e.rows() &&
                      e.rows() == e.cols(),
                  "frechet_quadrature: base and direction must be square and matching");
  const std::size_t r = a.rows();
  Matrix acc(r, r);
  for (const auto& [node, weight] : gauss_legendre(points)) {
    Matrix left(a);
    left *= 1.0 - node;
    Matrix right(a);
    right *= node;
    Matrix term = matmul(linalg::expm_small(left), matmul(e, linalg::expm_small(right)));
    term *= weight;
    acc += term;
  }
  return acc;
}

}  // namespace osa::oracle
