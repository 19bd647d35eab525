#pragma once

#include <cstdint>
#include <vector>

#include "osa/basis.hpp"
#include "osa/matrix.hpp"

namespace osa::attention {

struct OSAHeadParams {
  Matrix w_q;  // d x d_v
  Matrix w_k;  // d x d_v
  Matrix w_v;  // d x d_v
  Matrix w_o;  // d_v x d
  double alpha = 0.1;
};

// The restricted score core and everything needed to apply the exponential:
// the operator realized is A = I + b (exp_s - I) b^T.
struct LowRankAttention {
  Matrix b;        // n x r basis of span[q k]
  Matrix s_small;  // r x r restriction of the skew score
  Matrix exp_s;    // r x r orthogonal core
  basis::BasisDiagnostics diag;
};

LowRankAttention score_matrix_small(const Matrix& x, const OSAHeadParams& p,
                                    const basis::BasisMethod& method);

// A z = z + b ((exp_s - I) (b^T z)) without forming any n x n matrix.
Matrix apply_attention(const LowRankAttention& att, const Matrix& z);

Matrix osa_head_forward(const Matrix& x, const OSAHeadParams& p,
                        const basis::BasisMethod& method);

// Heads evaluate independently (in parallel when available); the outputs are
// summed in head order so results do not depend on scheduling.
Matrix mosa_forward(const Matrix& x, const std::vector<OSAHeadParams>& heads,
                    const basis::BasisMethod& method);

enum class Activation { Gelu, Identity };

struct MLPParams {
  Matrix w1;  // d x hidden
  Matrix b1;  // 1 x hidden
  Matrix w2;  // hidden x d
  Matrix b2;  // 1 x d
  Activation act = Activation::Gelu;
};

Matrix mlp_forward(const Matrix& x, const MLPParams& p);

struct BlockParams {
  std::vector<OSAHeadParams> heads;
  MLPParams mlp;
};

struct StackResult {
  Matrix x_final;
  std::vector<Matrix> trace;  // x after every block when recording
};

StackResult stack_forward(const Matrix& x0, const std::vector<BlockParams>& blocks,
                          const basis::BasisMethod& method, bool record_intermediates);

struct SSAHeadParams {
  Matrix w_q;
  Matrix w_k;
  Matrix w_v;
  Matrix w_o;
};

// Softmax attention baseline; materializes the n x n weight matrix on purpose.
Matrix ssa_head_forward(const Matrix& x, const SSAHeadParams& p);

// Eigenvalues of x x^T (the squared singular values of x, zero-padded),
// sorted non-increasing; length equals the token count.
std::vector<double> kernel_spectrum(const Matrix& x);

// Singular values of the realized operator A, computed from an r x r core
// plus the 1-padding of the orthogonal complement.
std::vector<double> attention_singular_values(const LowRankAttention& att);

// ||S||_2 of the full skew score S = scale (q k^T - k q^T), via a restricted
// core so no n x n matrix is formed.
double score_spectral_norm(const Matrix& q, const Matrix& k, double scale);

// Dense A for oracles and diagnostics only.
Matrix materialize_attention(const LowRankAttention& att);

enum class Mechanism { OSA, SSA };

struct RankCollapseResult {
  // spectra[l] is kernel_spectrum after l layers; spectra[0] is the input's.
  std::vector<std::vector<double>> spectra;
};

// Attention-only stack, one head of width d, no MLP between layers. OSA
// layers draw an orthogonal value-output product, so the input spectrum
// should survive; SSA layers use Xavier weights and exhibit collapse.
RankCollapseResult rank_collapse_experiment(const Matrix& x0, std::size_t depth,
                                            std::uint64_t seed, Mechanism mech,
                                            const basis::BasisMethod& method);

}  // namespace osa::attention
