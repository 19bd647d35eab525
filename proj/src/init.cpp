#include "osa/init.hpp"

#include <cmath>

#include "osa/linalg.hpp"

namespace osa::init {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

double Rng::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(mix64(seed_ ^ mix64(stream + kGolden)));
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.next_gaussian();
  return m;
}

Matrix xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = bound * (2.0 * rng.next_uniform() - 1.0);
  return m;
}

Matrix sample_stiefel(std::size_t n, std::size_t m, Rng& rng) {
  detail::require(n >= m && m >= 1, "sample_stiefel: requires n >= m >= 1");
  Matrix z = gaussian_matrix(n, m, rng);
  // reduced_qr already fixes column signs so the diagonal of r is >= 0.
  return linalg::reduced_qr(z).q;
}

ValueOutputPair init_value_output(std::size_t d, std::size_t d_v, Rng& rng) {
  detail::require(d_v >= 1 && d_v <= d, "init_value_output: requires 1 <= d_v <= d");
  Matrix u = sample_stiefel(d, d_v, rng);
  Matrix v = sample_stiefel(d, d_v, rng);
  return ValueOutputPair{std::move(u), v.transpose()};
}

QueryKeyPair init_query_key(std::size_t d, std::size_t d_v, Rng& rng) {
  detail::require(d_v >= 1 && 2 * d_v <= d, "init_query_key: requires 2*d_v <= d");
  Matrix u = sample_stiefel(d, 2 * d_v, rng);
  QueryKeyPair out{Matrix(d, d_v), Matrix(d, d_v)};
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d_v; ++j) {
      out.w_q(i, j) = u(i, j);
      out.w_k(i, j) = u(i, d_v + j);
    }
  return out;
}

attention::OSAHeadParams init_osa_head(std::size_t d, std::size_t d_v, double alpha0, Rng& rng) {
  detail::require(std::isfinite(alpha0), "init_osa_head: non-finite alpha0");
  QueryKeyPair qk = init_query_key(d, d_v, rng);
  ValueOutputPair vo = init_value_output(d, d_v, rng);
  return attention::OSAHeadParams{std::move(qk.w_q), std::move(qk.w_k), std::move(vo.w_v),
                                  std::move(vo.w_o), alpha0};
}

MLPInit init_mlp(std::size_t d, std::size_t ratio, Rng& rng, double gain) {
  detail::require(ratio >= 1, "init_mlp: ratio must be at least 1");
  const std::size_t hidden = ratio * d;
  Matrix f1 = sample_stiefel(hidden, d, rng);
  Matrix w1 = f1.transpose();
  w1 *= gain;
  Matrix w2 = sample_stiefel(hidden, d, rng);
  w2 *= gain;
  return MLPInit{std::move(w1), Matrix(1, hidden), std::move(w2), Matrix(1, d)};
}

}  // namespace osa::init
