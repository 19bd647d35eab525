// Compares the OpenMP kernels against the serial reference implementation:
// wall time per op across thread counts plus the max elementwise deviation,
// which must be exactly zero since both paths accumulate in the same order.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "osa/attention.hpp"
#include "osa/basis.hpp"
#include "osa/init.hpp"
#include "osa/matrix.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_median(const std::function<void()>& fn, std::size_t reps) {
  fn();  // warm-up
  std::vector<double> t;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    t.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
  }
  std::sort(t.begin(), t.end());
  const std::size_t m = t.size() / 2;
  return t.size() % 2 == 1 ? t[m] : 0.5 * (t[m - 1] + t[m]);
}

void set_threads(int k) {
#ifdef _OPENMP
  omp_set_num_threads(k);
#else
  (void)k;
#endif
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::size_t> sizes = {256, 512, 1024};
  std::vector<int> threads = {1, 2, 4};
  std::size_t reps = 5;

  CLI::App app{"serial reference vs parallel kernels"};
  app.add_option("--sizes", sizes, "square matmul sizes / token counts")->capture_default_str();
  app.add_option("--threads", threads, "thread counts to test")->capture_default_str();
  app.add_option("--reps", reps, "timed repetitions per point")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

#ifndef _OPENMP
  std::fprintf(stderr, "note: built without OpenMP, parallel path runs serially\n");
#endif

  std::printf("op,n,threads,median_ms,serial_ms,speedup,max_abs_diff\n");
  for (std::size_t n : sizes) {
    osa::init::Rng rng(7 + n);
    osa::Matrix a = osa::init::gaussian_matrix(n, n, rng);
    osa::Matrix b = osa::init::gaussian_matrix(n, n, rng);

    osa::Matrix ref;
    const double serial_ms = time_median([&] { ref = osa::ref::matmul(a, b); }, reps);
    for (int k : threads) {
      set_threads(k);
      osa::Matrix out;
      const double ms = time_median([&] { out = osa::matmul(a, b); }, reps);
      std::printf("matmul,%zu,%d,%.3f,%.3f,%.2f,%.17g\n", n, k, ms, serial_ms,
                  ms > 0.0 ? serial_ms / ms : 0.0, osa::max_abs_diff(ref, out));
    }
    set_threads(1);

    // Head forward at d=64, h=4: the end-to-end path the kernels serve.
    const std::size_t d = 64, dv = 16;
    if (n < 2 * dv) continue;
    osa::Matrix x = osa::init::gaussian_matrix(n, d, rng);
    std::vector<osa::attention::OSAHeadParams> heads;
    for (int h = 0; h < 4; ++h) heads.push_back(osa::init::init_osa_head(d, dv, 0.1, rng));

    set_threads(1);
    osa::Matrix fr;
    const double fwd_serial =
        time_median([&] { fr = osa::attention::mosa_forward(x, heads, osa::basis::BasisMethod::qr()); }, reps);
    for (int k : threads) {
      set_threads(k);
      osa::Matrix fo;
      const double ms = time_median(
          [&] { fo = osa::attention::mosa_forward(x, heads, osa::basis::BasisMethod::qr()); }, reps);
      std::printf("forward,%zu,%d,%.3f,%.3f,%.2f,%.17g\n", n, k, ms, fwd_serial,
                  ms > 0.0 ? fwd_serial / ms : 0.0, osa::max_abs_diff(fr, fo));
    }
    set_threads(1);
  }
  return 0;
}
