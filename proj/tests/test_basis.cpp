#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "osa/basis.hpp"
#include "osa/init.hpp"
#include "osa/linalg.hpp"
#include "osa/matrix.hpp"
#include "support.hpp"

using osa::Matrix;
using osa::init::Rng;

TEST_CASE("build_m concatenates query and key blocks") {
  Rng rng(1);
  Matrix q = osa::init::gaussian_matrix(6, 2, rng);
  Matrix k = osa::init::gaussian_matrix(6, 2, rng);
  Matrix m = osa::basis::build_m(q, k);
  REQUIRE(m.cols() == 4);
  CHECK(m(3, 1) == q(3, 1));
  CHECK(m(3, 2) == k(3, 0));
}

TEST_CASE("qr basis spans the input columns exactly") {
  Rng rng(2);
  Matrix m = osa::init::gaussian_matrix(10, 4, rng);
  auto res = osa::basis::qr_basis(m);
  CHECK(res.diag.r == 4);
  CHECK(res.diag.prenorm_scale == 1.0);
  CHECK(res.diag.ortho_residual <= 1e-13);
  CHECK(osa::max_abs_diff(osa::matmul_tn(res.b, res.b), Matrix::identity(4)) <= 1e-13);
  // Projection residual: (I - b b^T) m = 0 when b spans col(m).
  Matrix proj = osa::matmul(res.b, osa::matmul_tn(res.b, m));
  CHECK(osa::max_abs_diff(proj, m) <= 1e-12);
}

TEST_CASE("polar iteration follows the scalar recurrence") {
  // A single column of norm 1 with eps = 1 puts the only singular value of
  // the normalized start exactly at 0.5.
  Matrix m(3, 1);
  m(0, 0) = 1.0;
  for (int iters = 0; iters <= 8; ++iters) {
    auto res = osa::basis::newton_schulz_basis(m, iters, 1.0);
    const double want = testsupport::polar_scalar(0.5, iters);
    CHECK(res.b.frobenius_norm() == doctest::Approx(want).epsilon(1e-15));
    CHECK(res.diag.prenorm_scale == doctest::Approx(2.0).epsilon(1e-15));
  }
}

TEST_CASE("known scalar trajectory from one half") {
  CHECK(testsupport::polar_scalar(0.5, 1) == doctest::Approx(0.6875).epsilon(1e-16));
  CHECK(testsupport::polar_scalar(0.5, 2) == doctest::Approx(0.8687744140625).epsilon(1e-16));
  CHECK(std::fabs(testsupport::polar_scalar(0.5, 6) - 1.0) <= 2e-11);
}

TEST_CASE("orthonormal matrices are fixed points of the iteration") {
  Rng rng(3);
  Matrix u = osa::init::sample_stiefel(8, 3, rng);
  Matrix out = osa::basis::ns_iterate(u, 5);
  CHECK(osa::max_abs_diff(out, u) <= 1e-14);
}

TEST_CASE("singular values approach one from below") {
  Rng rng(4);
  Matrix m = osa::init::gaussian_matrix(64, 2, rng);
  double prev_min = 0.0;
  for (int iters = 0; iters <= 10; ++iters) {
    auto res = osa::basis::newton_schulz_basis(m, iters, 1e-6);
    auto sv = osa::linalg::singular_values(res.b);
    CHECK(sv.front() <= 1.0 + 1e-12);
    CHECK(sv.back() + 1e-12 >= prev_min);
    prev_min = sv.back();
  }
  auto res6 = osa::basis::newton_schulz_basis(m, 6, 1e-6);
  CHECK(res6.diag.ortho_residual <= 1e-9);
  auto res10 = osa::basis::newton_schulz_basis(m, 10, 1e-6);
  CHECK(res10.diag.ortho_residual <= 1e-12);
}

TEST_CASE("diagnostics record the spread of the basis spectrum") {
  Rng rng(5);
  Matrix m = osa::init::gaussian_matrix(24, 4, rng);
  auto res = osa::basis::newton_schulz_basis(m, 3, 1e-6);
  auto sv = osa::linalg::singular_values(res.b);
  CHECK(res.diag.max_sv == doctest::Approx(sv.front()).epsilon(1e-10));
  CHECK(res.diag.min_sv == doctest::Approx(sv.back()).epsilon(1e-10));
  CHECK(res.diag.r == 4);
}

TEST_CASE("compute_basis dispatches on the method") {
  Rng rng(6);
  Matrix m = osa::init::gaussian_matrix(12, 4, rng);
  auto via_qr = osa::basis::compute_basis(m, osa::basis::BasisMethod::qr());
  CHECK(osa::max_abs_diff(via_qr.b, osa::basis::qr_basis(m).b) == 0.0);
  auto method = osa::basis::BasisMethod::newton_schulz(4, 1e-5);
  auto via_ns = osa::basis::compute_basis(m, method);
  CHECK(osa::max_abs_diff(via_ns.b, osa::basis::newton_schulz_basis(m, 4, 1e-5).b) == 0.0);
}

TEST_CASE("error bound pieces are ordered") {
  // With all singular values at 1/sqrt(2) the per-index factor reaches the
  // worst case 1/4 and the two bounds coincide.
  const double s = 0.7;
  std::vector<double> sig = {std::sqrt(0.5), std::sqrt(0.5)};
  auto b = osa::basis::ortho_error_bound(s, sig);
  CHECK(b.tight == doctest::Approx(b.loose).epsilon(1e-15));

  std::vector<double> mixed = {1.0, 0.9, 0.5};
  auto b2 = osa::basis::ortho_error_bound(s, mixed);
  CHECK(b2.tight <= b2.loose + 1e-15);
  const double em1 = std::expm1(s);
  CHECK(b2.loose == doctest::Approx(0.25 * em1 * em1).epsilon(1e-14));
  CHECK(b2.tight == doctest::Approx(em1 * em1 * 0.25 * 0.75).epsilon(1e-14));
}

TEST_CASE("measured error matches a dense evaluation") {
  Rng rng(7);
  for (int iters : {1, 3, 6}) {
    Matrix m = osa::init::gaussian_matrix(20, 4, rng);
    auto res = osa::basis::newton_schulz_basis(m, iters, 1e-6);
    Matrix g = osa::init::gaussian_matrix(4, 4, rng);
    Matrix skew = 0.5 * (g - g.transpose());
    Matrix e = osa::linalg::expm_small(skew);

    const double fast = osa::basis::measured_ortho_error(res.b, e);
    // Dense reference: form y and take the top singular value of y^T y - I.
    Matrix y = Matrix::identity(20);
    Matrix delta = e - Matrix::identity(4);
    y += osa::matmul(res.b, osa::matmul(delta, res.b.transpose()));
    Matrix err = osa::matmul_tn(y, y) - Matrix::identity(20);
    const double slow = osa::linalg::singular_values(err).front();
    CHECK(fast == doctest::Approx(slow).epsilon(1e-9));
  }
}

TEST_CASE("exactly orthonormal basis has zero measured error") {
  Rng rng(8);
  Matrix u = osa::init::sample_stiefel(10, 4, rng);
  Matrix g = osa::init::gaussian_matrix(4, 4, rng);
  Matrix e = osa::linalg::expm_small(0.5 * (g - g.transpose()));
  // Gram residual is tiny but not exactly zero, so the measured error is
  // bounded by it rather than by machine epsilon alone.
  CHECK(osa::basis::measured_ortho_error(u, e) <= 1e-13);
}

TEST_CASE("newton schulz rejects bad arguments") {
  Matrix m(4, 2);
  m(0, 0) = 1.0;
  CHECK_THROWS(osa::basis::newton_schulz_basis(m, -1, 1e-6));
  CHECK_THROWS(osa::basis::newton_schulz_basis(m, 3, 0.0));
}
