// Acceptance gate: ten fixed-configuration criteria, one verdict line each.
// Tolerances are pinned here on purpose; a failing line means the property
// does not hold as stated, not that a knob needs retuning.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "osa/attention.hpp"
#include "osa/basis.hpp"
#include "osa/init.hpp"
#include "osa/jacobian.hpp"
#include "osa/linalg.hpp"
#include "osa/matrix.hpp"
#include "osa/oracle.hpp"
#include "osa/suites.hpp"

using osa::Matrix;
using osa::init::Rng;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(int idx, const char* label, bool pass, const std::string& detail,
             Clock::time_point t0) {
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  std::printf("[%s] %02d %-34s %s (%.1fs)\n", pass ? "PASS" : "FAIL", idx, label,
              detail.c_str(), s);
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s=%.3g", key, v);
  return buf;
}

Matrix normalized_input(std::size_t n, std::size_t d, Rng& rng) {
  Matrix x = osa::init::gaussian_matrix(n, d, rng);
  const double s = osa::linalg::spectral_norm(x);
  if (s > 0.0) x *= 2.0 / s;
  return x;
}

// 1. The restricted-core operator reproduces the dense matrix exponential.
void criterion_lowrank_identity() {
  const auto t0 = Clock::now();
  const std::size_t shapes[][3] = {{6, 4, 2}, {8, 8, 2}, {16, 8, 4}};
  double worst = 0.0;
  bool ok = true;
  try {
    for (const auto& sh : shapes)
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng = Rng(1000 + seed).fork(sh[0]);
        Matrix x = normalized_input(sh[0], sh[1], rng);
        auto p = osa::init::init_osa_head(sh[1], sh[2], 1.0, rng);
        auto lr = osa::attention::score_matrix_small(x, p, osa::basis::BasisMethod::qr());
        Matrix fast = osa::attention::materialize_attention(lr);
        Matrix dense = osa::oracle::dense_attention_operator(x, p);
        worst = std::max(worst, (fast - dense).frobenius_norm() / dense.frobenius_norm());
      }
    ok = worst <= 1e-9;
  } catch (const std::exception& ex) {
    ok = false;
  }
  verdict(1, "low-rank operator identity", ok, fmt("max_rel_err", worst) + " bound=1e-09", t0);
}

// 2. Measured orthogonality error sits under the spectrum-aware bound, which
// sits under its sigma-free relaxation, at every polar iteration depth.
void criterion_ortho_bounds() {
  const auto t0 = Clock::now();
  const std::size_t n = 32, d = 8, dv = 4;
  std::size_t violations = 0;
  double worst_ratio = 0.0;  // measured / tight, should stay at or below 1
  for (int iters : {1, 3, 6})
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng rng = Rng(2000 + seed).fork(iters);
      Matrix x = normalized_input(n, d, rng);
      auto p = osa::init::init_osa_head(d, dv, 0.1, rng);
      auto method = osa::basis::BasisMethod::newton_schulz(iters, 1e-6);
      auto lr = osa::attention::score_matrix_small(x, p, method);
      const double measured = osa::basis::measured_ortho_error(lr.b, lr.exp_s);

      Matrix q = osa::matmul(x, p.w_q);
      Matrix k = osa::matmul(x, p.w_k);
      const double s_norm =
          osa::attention::score_spectral_norm(q, k, p.alpha / std::sqrt(double(dv)));
      auto bound = osa::basis::ortho_error_bound(s_norm, osa::linalg::singular_values(lr.b));
      if (!(measured <= bound.tight && bound.tight <= bound.loose + 1e-15)) ++violations;
      if (bound.tight > 0.0) worst_ratio = std::max(worst_ratio, measured / bound.tight);
    }
  verdict(2, "orthogonality error bounds", violations == 0,
          fmt("violations", double(violations)) + " " + fmt("worst_measured_over_tight", worst_ratio),
          t0);
}

// 3. Deep attention-only stacks: orthogonal updates preserve the kernel
// spectrum, the softmax baseline contracts its second-to-first ratio.
void criterion_rank_preservation() {
  const auto t0 = Clock::now();
  const std::size_t n = 16, d = 4, depth = 16;
  double worst_dev = 0.0;
  std::size_t decay_misses = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(3000 + seed);
    Matrix x0 = osa::init::gaussian_matrix(n, d, rng);
    auto osa_res = osa::attention::rank_collapse_experiment(
        x0, depth, rng.fork(1).seed(), osa::attention::Mechanism::OSA,
        osa::basis::BasisMethod::qr());
    for (std::size_t l = 1; l < osa_res.spectra.size(); ++l)
      for (std::size_t i = 0; i < osa_res.spectra[l].size(); ++i)
        worst_dev = std::max(worst_dev,
                             std::fabs(osa_res.spectra[l][i] - osa_res.spectra[0][i]));
    auto ssa_res = osa::attention::rank_collapse_experiment(
        x0, depth, rng.fork(1).seed(), osa::attention::Mechanism::SSA,
        osa::basis::BasisMethod::qr());
    const auto& f = ssa_res.spectra.front();
    const auto& b = ssa_res.spectra.back();
    if (!(b[1] / b[0] < f[1] / f[0])) ++decay_misses;
  }
  const bool ok = worst_dev <= 1e-8 && decay_misses == 0;
  verdict(3, "kernel spectrum preservation", ok,
          fmt("max_drift", worst_dev) + " bound=1e-08 " + fmt("decay_misses", double(decay_misses)),
          t0);
}

// 4. Assembled Jacobian equals central differences entrywise.
void criterion_jacobian_fd() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (auto method : {osa::basis::BasisMethod::qr(), osa::basis::BasisMethod::newton_schulz(6, 1e-6)})
    for (double alpha : {0.01, 0.1, 1.0})
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(4000 + seed);
        Matrix x = normalized_input(4, 4, rng);
        auto p = osa::init::init_osa_head(4, 2, alpha, rng);
        Matrix j = osa::jacobian::jacobian_full(x, p, method);
        Matrix f = osa::jacobian::jacobian_fd(x, p, method, osa::jacobian::default_fd_step(x));
        worst = std::max(worst, osa::max_abs_diff(j, f));
      }
  verdict(4, "jacobian matches finite differences", worst <= 1e-5,
          fmt("max_abs_err", worst) + " bound=1e-05", t0);
}

// 5. Initialization spectra: unit non-zero singular values for the score
// coupling and the value-output product.
void criterion_init_spectra() {
  const auto t0 = Clock::now();
  const std::size_t shapes[][2] = {{8, 2}, {16, 4}, {64, 8}};
  double worst = 0.0;
  for (const auto& sh : shapes)
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng rng = Rng(5000 + seed).fork(sh[0]);
      const std::size_t d = sh[0], dv = sh[1];
      auto qk = osa::init::init_query_key(d, dv, rng);
      Matrix wt = osa::matmul_nt(qk.w_q, qk.w_k) - osa::matmul_nt(qk.w_k, qk.w_q);
      auto sv = osa::linalg::singular_values(wt);
      for (std::size_t i = 0; i < sv.size(); ++i)
        worst = std::max(worst, i < 2 * dv ? std::fabs(sv[i] - 1.0) : sv[i]);
      auto vo = osa::init::init_value_output(d, dv, rng);
      auto fsv = osa::linalg::singular_values(osa::matmul(vo.w_v, vo.w_o));
      for (std::size_t i = 0; i < fsv.size(); ++i)
        worst = std::max(worst, i < dv ? std::fabs(fsv[i] - 1.0) : fsv[i]);
    }
  verdict(5, "initialization spectra", worst <= 1e-9, fmt("max_dev", worst) + " bound=1e-09",
          t0);
}

// 6. Conditioning across the gate: spectra of the full Jacobian track the
// value-path term index by index, the residual term scales linearly with
// alpha, and at the smallest alpha the map is near-isometric down to the
// value-path rank.
void criterion_conditioning() {
  const auto t0 = Clock::now();
  const std::size_t n = 8, d = 8, dv = 4;
  const double alphas[] = {1e-4, 1e-3, 1e-2, 1e-1};
  double worst_weyl_excess = -std::numeric_limits<double>::infinity();
  double worst_band = 0.0;
  double worst_kappa_dev = 0.0;
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(6000 + seed);
    Matrix x = normalized_input(n, d, rng);
    auto p = osa::init::init_osa_head(d, dv, 1.0, rng);
    std::vector<double> ratios;
    for (double a : alphas) {
      p.alpha = a;
      auto det = osa::jacobian::condition_detail(x, p, osa::basis::BasisMethod::qr(), 1e-7);
      double weyl = 0.0;
      for (std::size_t i = 0; i < det.sigma_j.size(); ++i) {
        const double s2 = i < det.sigma_j2.size() ? det.sigma_j2[i] : 0.0;
        weyl = std::max(weyl, std::fabs(det.sigma_j[i] - s2));
      }
      worst_weyl_excess = std::max(worst_weyl_excess, weyl - det.report.j1_norm);
      if (weyl > det.report.j1_norm + 1e-8) ok = false;
      ratios.push_back(det.report.j1_norm / a);

      if (a == alphas[0]) {
        // kappa taken at the effective rank of the value-path term.
        std::size_t r2 = 0;
        for (double s : det.sigma_j2)
          if (s > 1e-7 * det.sigma_j2.front()) ++r2;
        if (r2 == 0 || det.sigma_j[r2 - 1] <= 0.0) {
          ok = false;
        } else {
          const double kappa = det.sigma_j.front() / det.sigma_j[r2 - 1];
          worst_kappa_dev = std::max(worst_kappa_dev, std::fabs(kappa - 1.0));
          if (!(std::fabs(kappa - 1.0) <= 1e-2)) ok = false;
        }
      }
    }
    double lo = ratios[0], hi = ratios[0];
    for (double r : ratios) {
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    worst_band = std::max(worst_band, hi / lo);
    if (!(hi / lo <= 3.0)) ok = false;
  }
  verdict(6, "jacobian conditioning vs alpha", ok,
          fmt("weyl_excess", worst_weyl_excess) + " " + fmt("ratio_band", worst_band) + " " +
              fmt("kappa_dev_at_1e-4", worst_kappa_dev),
          t0);
}

// 7. Token permutations commute with the forward map.
void criterion_equivariance() {
  const auto t0 = Clock::now();
  const std::size_t n = 12, d = 8;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(7000 + seed);
    Matrix x = osa::init::gaussian_matrix(n, d, rng);
    auto p = osa::init::init_osa_head(d, 3, 0.8, rng);
    std::vector<osa::attention::OSAHeadParams> heads;
    heads.push_back(osa::init::init_osa_head(d, 2, 0.5, rng));
    heads.push_back(osa::init::init_osa_head(d, 2, 0.5, rng));
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<std::size_t> perm(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      for (std::size_t i = n - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.next_u64() % (i + 1)]);
      Matrix pm(n, n);
      for (std::size_t i = 0; i < n; ++i) pm(i, perm[i]) = 1.0;
      Matrix px = osa::matmul(pm, x);
      for (auto method :
           {osa::basis::BasisMethod::qr(), osa::basis::BasisMethod::newton_schulz(6, 1e-6)}) {
        Matrix lhs = osa::attention::osa_head_forward(px, p, method);
        Matrix rhs = osa::matmul(pm, osa::attention::osa_head_forward(x, p, method));
        worst = std::max(worst, osa::max_abs_diff(lhs, rhs));
        Matrix ml = osa::attention::mosa_forward(px, heads, method);
        Matrix mr = osa::matmul(pm, osa::attention::mosa_forward(x, heads, method));
        worst = std::max(worst, osa::max_abs_diff(ml, mr));
      }
    }
  }
  verdict(7, "permutation equivariance", worst <= 1e-10,
          fmt("max_abs_err", worst) + " bound=1e-10", t0);
}

// 8. Scaling: near-linear time and memory for the low-rank path, quadratic
// growth for the dense softmax baseline.
void criterion_scaling() {
  const auto t0 = Clock::now();
  osa::harness::RunConfig cfg;
  cfg.seed = 8000;
  cfg.d = 64;
  cfg.heads = 4;
  cfg.alpha = 0.1;
  cfg.n = 512;  // placeholder for validation; sizes below drive the run
  cfg.trials = 1;
  bool ok = true;
  std::string detail;
  try {
    std::vector<osa::harness::BenchRow> rows;
    auto rep = osa::harness::run_bench(cfg, {512, 1024, 2048, 4096}, 5, 1, &rows);
    for (const auto& c : rep.checks) {
      if (!c.pass) ok = false;
      detail += c.name + "=" + osa::report::format_double(c.measured).substr(0, 8) + " ";
    }
    if (rep.checks.empty()) ok = false;
  } catch (const std::exception& ex) {
    ok = false;
    detail = ex.what();
  }
  verdict(8, "scaling separation", ok, detail, t0);
}

// 9. Block evaluation of the exponential derivative against quadrature.
void criterion_frechet_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(9000 + seed);
    Matrix g = osa::init::gaussian_matrix(8, 8, rng);
    Matrix a = 0.5 * (g - g.transpose());
    const double s = osa::linalg::spectral_norm(a);
    if (s > 2.0) a *= 2.0 / s;
    Matrix e = osa::init::gaussian_matrix(8, 8, rng);
    e *= 1.0 / e.frobenius_norm();
    Matrix block = osa::jacobian::expm_frechet(a, e);
    Matrix quad = osa::oracle::frechet_quadrature(a, e, 64);
    worst = std::max(worst, osa::max_abs_diff(block, quad));
  }
  verdict(9, "exponential derivative oracle", worst <= 1e-8,
          fmt("max_abs_err", worst) + " bound=1e-08", t0);
}

// 10. Frame sampler: orthonormal output, balanced signs, uniform angles.
void criterion_frame_stats() {
  const auto t0 = Clock::now();
  Rng rng(10000);
  double ortho = 0.0;
  for (int i = 0; i < 100; ++i) {
    Matrix q = osa::init::sample_stiefel(16, 4, rng);
    ortho = std::max(ortho, osa::max_abs_diff(osa::matmul_tn(q, q), Matrix::identity(4)));
  }
  int positive = 0;
  const int reps = 10000;
  for (int i = 0; i < reps; ++i)
    if (osa::init::sample_stiefel(1, 1, rng)(0, 0) > 0.0) ++positive;
  const double frac = double(positive) / reps;

  std::vector<double> angles(reps);
  for (int i = 0; i < reps; ++i) {
    Matrix q = osa::init::sample_stiefel(2, 1, rng);
    angles[std::size_t(i)] = std::atan2(q(1, 0), q(0, 0));
  }
  std::sort(angles.begin(), angles.end());
  double ks = 0.0;
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < reps; ++i) {
    const double cdf = (angles[std::size_t(i)] + pi) / (2.0 * pi);
    ks = std::max(ks, std::max(cdf - double(i) / reps, double(i + 1) / reps - cdf));
  }
  const bool ok = ortho <= 1e-12 && frac >= 0.47 && frac <= 0.53 && ks <= 0.02;
  verdict(10, "frame sampler statistics", ok,
          fmt("ortho", ortho) + " " + fmt("positive_frac", frac) + " " + fmt("ks", ks), t0);
}

}  // namespace

int main() {
  criterion_lowrank_identity();
  criterion_ortho_bounds();
  criterion_rank_preservation();
  criterion_jacobian_fd();
  criterion_init_spectra();
  criterion_conditioning();
  criterion_equivariance();
  criterion_scaling();
  criterion_frechet_oracle();
  criterion_frame_stats();
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures;
}
