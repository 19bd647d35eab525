#pragma once

#include <utility>
#include <vector>

#include "osa/attention.hpp"
#include "osa/matrix.hpp"

namespace osa::oracle {

// Dense n x n skew score S = alpha/sqrt(d_v) (q k^T - k q^T).
Matrix dense_score_matrix(const Matrix& x, const attention::OSAHeadParams& p);

// Dense realized operator exp(S), bypassing the restricted-core identity.
// Refuses n > 64; this is the cross-check, not the product path.
Matrix dense_attention_operator(const Matrix& x, const attention::OSAHeadParams& p);

// Gauss-Legendre nodes and weights on [0, 1].
std::vector<std::pair<double, double>> gauss_legendre(int n);

// Integral form of the Frechet derivative of expm applied to e:
// integral_0^1 exp((1-s) a) e exp(s a) ds by n-point Gauss-Legendre.
Matrix frechet_quadrature(const Matrix& a, const Matrix& e, int points = 64);

}  // namespace osa::oracle
