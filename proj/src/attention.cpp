#include "osa/attention.hpp"

#include <algorithm>
#include <cmath>

#include "osa/init.hpp"
#include "osa/linalg.hpp"

namespace osa::attention {

namespace {

void check_head_shapes(const Matrix& x, const OSAHeadParams& p) {
  detail::require(p.w_q.rows() == x.cols() && p.w_k.rows() == x.cols() &&
                      p.w_v.rows() == x.cols(),
                  "osa head: weight rows must match model width");
  detail::require(p.w_q.cols() == p.w_k.cols() && p.w_q.cols() == p.w_v.cols() &&
                      p.w_o.rows() == p.w_q.cols() && p.w_o.cols() == x.cols(),
                  "osa head: inconsistent head width");
  detail::require(std::isfinite(p.alpha), "osa head: non-finite alpha");
}

}  // namespace

LowRankAttention score_matrix_small(const Matrix& x, const OSAHeadParams& p,
                                    const basis::BasisMethod& method) {
  check_head_shapes(x, p);
  detail::require(x.is_finite(), "score_matrix_small: non-finite input");

  Matrix q = matmul(x, p.w_q);
  Matrix k = matmul(x, p.w_k);
  Matrix m = basis::build_m(q, k);
  basis::BasisResult bas = basis::compute_basis(m, method);

  const double d_v = static_cast<double>(p.w_q.cols());
  const double c = p.alpha / std::sqrt(d_v);
  Matrix u = matmul_tn(bas.b, q);
  Matrix v = matmul_tn(bas.b, k);
  Matrix raw = matmul_nt(u, v);
  Matrix s = raw - raw.transpose();
  s *= c;

  // Explicit guard: exponentiate the skew-symmetric part only.
  Matrix skew = s - s.transpose();
  skew *= 0.5;
  Matrix exp_s = linalg::expm_small(skew);

  return LowRankAttention{std::move(bas.b), std::move(s), std::move(exp_s),
                          std::move(bas.diag)};
}

Matrix apply_attention(const LowRankAttention& att, const Matrix& z) {
  detail::require(z.rows() == att.b.rows(), "apply_attention: token count mismatch");
  Matrix t = matmul_tn(att.b, z);
  Matrix core = att.exp_s - Matrix::identity(att.exp_s.rows());
  Matrix w = matmul(core, t);
  return z + matmul(att.b, w);
}

Matrix osa_head_forward(const Matrix& x, const OSAHeadParams& p,
                        const basis::BasisMethod& method) {
  LowRankAttention att = score_matrix_small(x, p, method);
  Matrix z = matmul(matmul(x, p.w_v), p.w_o);
  return apply_attention(att, z);
}

Matrix mosa_forward(const Matrix& x, const std::vector<OSAHeadParams>& heads,
                    const basis::BasisMethod& method) {
  detail::require(!heads.empty(), "mosa_forward: needs at least one head");
  std::vector<Matrix> outs(heads.size());
#pragma omp parallel for schedule(dynamic) if (heads.size() > 1)
  for (long long i = 0; i < static_cast<long long>(heads.size()); ++i)
    outs[i] = osa_head_forward(x, heads[i], method);

  Matrix sum(x.rows(), x.cols());
  for (const Matrix& o : outs) sum += o;  // fixed head order
  return sum;
}

namespace {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

}  // namespace

Matrix mlp_forward(const Matrix& x, const MLPParams& p) {
  detail::require(p.w1.rows() == x.cols() && p.w2.cols() == x.cols() &&
                      p.w1.cols() == p.w2.rows(),
                  "mlp_forward: weight shape mismatch");
  detail::require(p.b1.rows() == 1 && p.b1.cols() == p.w1.cols() && p.b2.rows() == 1 &&
                      p.b2.cols() == p.w2.cols(),
                  "mlp_forward: bias shape mismatch");
  Matrix h = matmul(x, p.w1);
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j) {
      const double v = h(i, j) + p.b1(0, j);
      h(i, j) = p.act == Activation::Gelu ? gelu(v) : v;
    }
  Matrix y = matmul(h, p.w2);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += p.b2(0, j);
  return y;
}

StackResult stack_forward(const Matrix& x0, const std::vector<BlockParams>& blocks,
                          const basis::BasisMethod& method, bool record_intermediates) {
  StackResult out;
  Matrix x(x0);
  for (const BlockParams& blk : blocks) {
    Matrix mixed = mosa_forward(x, blk.heads, method);
    x = mlp_forward(mixed, blk.mlp);
    if (record_intermediates) out.trace.push_back(x);
  }
  out.x_final = std::move(x);
  return out;
}

Matrix ssa_head_forward(const Matrix& x, const SSAHeadParams& p) {
  detail::require(p.w_q.rows() == x.cols() && p.w_k.rows() == x.cols() &&
                      p.w_v.rows() == x.cols() && p.w_q.cols() == p.w_k.cols() &&
                      p.w_o.rows() == p.w_v.cols() && p.w_o.cols() == x.cols(),
                  "ssa head: weight shape mismatch");
  Matrix q = matmul(x, p.w_q);
  Matrix k = matmul(x, p.w_k);
  Matrix scores = matmul_nt(q, k);
  scores *= 1.0 / std::sqrt(static_cast<double>(p.w_q.cols()));

  for (std::size_t i = 0; i < scores.rows(); ++i) {
    double mx = scores(i, 0);
    for (std::size_t j = 1; j < scores.cols(); ++j) mx = std::max(mx, scores(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < scores.cols(); ++j) {
      scores(i, j) = std::exp(scores(i, j) - mx);
      sum += scores(i, j);
    }
    for (std::size_t j = 0; j < scores.cols(); ++j) scores(i, j) /= sum;
  }

  Matrix z = matmul(matmul(x, p.w_v), p.w_o);
  return matmul(scores, z);
}

std::vector<double> kernel_spectrum(const Matrix& x) {
  const auto sv = linalg::singular_values(x);
  std::vector<double> out(x.rows(), 0.0);
  for (std::size_t i = 0; i < sv.size() && i < out.size(); ++i) out[i] = sv[i] * sv[i];
  return out;
}

std::vector<double> attention_singular_values(const LowRankAttention& att) {
  const std::size_t n = att.b.rows(), r = att.b.cols();
  Matrix core = att.exp_s - Matrix::identity(r);
  if (n >= r) {
    // A is the identity plus q (rf core rf^T) q^T, so its spectrum is the
    // spectrum of I_r + rf core rf^T padded with ones.
    Matrix rf = linalg::reduced_qr(att.b).r;
    Matrix t = matmul_nt(matmul(rf, core), rf);
    auto sv = linalg::singular_values(Matrix::identity(r) + t);
    sv.resize(n, 1.0);
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
  }
  auto sv = linalg::singular_values(materialize_attention(att));
  return sv;
}

double score_spectral_norm(const Matrix& q, const Matrix& k, double scale) {
  detail::require(q.rows() == k.rows() && q.cols() == k.cols(),
                  "score_spectral_norm: shape mismatch");
  const std::size_t n = q.rows(), r = 2 * q.cols();
  if (n < r) {
    Matrix raw = matmul_nt(q, k);
    Matrix s = raw - raw.transpose();
    s *= scale;
    return linalg::spectral_norm(s);
  }
  Matrix qm = linalg::reduced_qr(basis::build_m(q, k)).q;
  Matrix u = matmul_tn(qm, q);
  Matrix v = matmul_tn(qm, k);
  Matrix raw = matmul_nt(u, v);
  Matrix s = raw - raw.transpose();
  s *= scale;
  return linalg::spectral_norm(s);
}

Matrix materialize_attention(const LowRankAttention& att) {
  const std::size_t n = att.b.rows(), r = att.b.cols();
  detail::require(n <= 1024, "materialize_attention: diagnostic path refuses n > 1024");
  Matrix core = att.exp_s - Matrix::identity(r);
  return Matrix::identity(n) + matmul(att.b, matmul_nt(core, att.b));
}

RankCollapseResult rank_collapse_experiment(const Matrix& x0, std::size_t depth,
                                            std::uint64_t seed, Mechanism mech,
                                            const basis::BasisMethod& method) {
  detail::require(x0.is_finite(), "rank_collapse_experiment: non-finite input");
  const std::size_t d = x0.cols();
  init::Rng base(seed);

  RankCollapseResult out;
  out.spectra.push_back(kernel_spectrum(x0));

  Matrix x(x0);
  for (std::size_t l = 0; l < depth; ++l) {
    init::Rng rng = base.fork(l);
    if (mech == Mechanism::OSA) {
      // Width-d head with an orthogonal value-output product; the query/key
      // weights are unconstrained, so plain Gaussian scaling is used.
      auto vo = init::init_value_output(d, d, rng);
      OSAHeadParams p{init::gaussian_matrix(d, d, rng), init::gaussian_matrix(d, d, rng),
                      std::move(vo.w_v), std::move(vo.w_o), 1.0};
      p.w_q *= 1.0 / std::sqrt(static_cast<double>(d));
      p.w_k *= 1.0 / std::sqrt(static_cast<double>(d));
      x = osa_head_forward(x, p, method);
    } else {
      SSAHeadParams p{init::xavier_uniform(d, d, rng), init::xavier_uniform(d, d, rng),
                      init::xavier_uniform(d, d, rng), init::xavier_uniform(d, d, rng)};
      x = ssa_head_forward(x, p);
    }
    out.spectra.push_back(kernel_spectrum(x));
  }
  return out;
}

}  // namespace osa::attention
