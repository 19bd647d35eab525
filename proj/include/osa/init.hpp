#pragma once

#include <cstdint>

#include "osa/attention.hpp"
#include "osa/matrix.hpp"

namespace osa::init {

// Deterministic stream built on the SplitMix64 mixer, so the same seed yields
// the same draws on every platform. Gaussians come from a Box-Muller transform
// of uniform pairs; independent streams are forked by hashing (seed, stream)
// through the same mixer.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  std::uint64_t next_u64();
  double next_uniform();   // [0, 1)
  double next_gaussian();  // standard normal
  Rng fork(std::uint64_t stream) const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng);
Matrix xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// Haar-distributed orthonormal frame: Gaussian draw, reduced QR, column signs
// fixed by the sign of the corresponding diagonal entry of r. Requires n >= m.
Matrix sample_stiefel(std::size_t n, std::size_t m, Rng& rng);

struct ValueOutputPair {
  Matrix w_v;  // d x d_v
  Matrix w_o;  // d_v x d
};

struct QueryKeyPair {
  Matrix w_q;  // d x d_v
  Matrix w_k;  // d x d_v
};

// w_v = U and w_o = V^T for independent frames U, V; the product w_v w_o then
// has d_v unit singular values and d - d_v zeros.
ValueOutputPair init_value_output(std::size_t d, std::size_t d_v, Rng& rng);

// One frame U of 2*d_v orthonormal columns split in half, so the score
// coupling w_q w_k^T - w_k w_q^T has all non-zero singular values equal to 1.
// Requires 2*d_v <= d.
QueryKeyPair init_query_key(std::size_t d, std::size_t d_v, Rng& rng);

// Assembles a full head from the query-key and value-output schemes above.
attention::OSAHeadParams init_osa_head(std::size_t d, std::size_t d_v, double alpha0, Rng& rng);

struct MLPInit {
  Matrix w1;  // d x (ratio*d), rows orthonormal scaled by gain
  Matrix b1;  // 1 x (ratio*d), zero
  Matrix w2;  // (ratio*d) x d, columns orthonormal scaled by gain
  Matrix b2;  // 1 x d, zero
};

MLPInit init_mlp(std::size_t d, std::size_t ratio, Rng& rng, double gain = 1.0);

}  // namespace osa::init
