#include "osa/suites.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "osa/attention.hpp"
#include "osa/init.hpp"
#include "osa/jacobian.hpp"
#include "osa/linalg.hpp"
#include "osa/oracle.hpp"

namespace osa::harness {

namespace {

using attention::OSAHeadParams;
using init::Rng;
using report::CheckRecord;
using report::Report;

// Stream ids keep the per-command random draws disjoint under a shared seed.
constexpr std::uint64_t kStreamOrtho = 1;
constexpr std::uint64_t kStreamRank = 2;
constexpr std::uint64_t kStreamJacobian = 3;
constexpr std::uint64_t kStreamInit = 4;
constexpr std::uint64_t kStreamBounds = 5;
constexpr std::uint64_t kStreamSweep = 6;
constexpr std::uint64_t kStreamRankDemo = 7;
constexpr std::uint64_t kStreamBench = 8;
constexpr std::uint64_t kStreamOracle = 9;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Gaussian input rescaled to spectral norm 2, the working point used by the
// conditioning and orthogonality studies.
Matrix normalized_input(std::size_t n, std::size_t d, Rng& rng) {
  Matrix x = init::gaussian_matrix(n, d, rng);
  const double s = linalg::spectral_norm(x);
  if (s > 0.0) x *= 2.0 / s;
  return x;
}

// Collects the first exception thrown inside a parallel trial loop so it can
// be rethrown on the calling thread.
struct TrialGuard {
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::string message;

  template <typename Fn>
  void run(Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& ex) {
      std::lock_guard<std::mutex> lock(mu);
      if (!failed.exchange(true)) message = ex.what();
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!failed.exchange(true)) message = "unknown error in trial";
    }
  }
  void rethrow() const {
    if (failed.load()) throw std::runtime_error(message);
  }
};

void append_all(Report& rep, std::vector<std::vector<CheckRecord>>& buckets) {
  for (auto& b : buckets)
    for (auto& r : b) rep.checks.push_back(std::move(r));
}

std::string trial_tag(std::size_t t) { return "t" + std::to_string(t); }

std::string tag_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// check suites

void suite_orthogonality(const RunConfig& cfg, Report& rep) {
  const basis::BasisMethod ns = basis::BasisMethod::newton_schulz(cfg.ns_iters, cfg.eps);
  std::vector<std::vector<CheckRecord>> buckets(cfg.trials);
  TrialGuard guard;
  const Rng base = Rng(cfg.seed).fork(kStreamOrtho);
#pragma omp parallel for schedule(dynamic) if (cfg.trials > 1)
  for (long long t = 0; t < static_cast<long long>(cfg.trials); ++t) {
    guard.run([&, t] {
      const auto t0 = Clock::now();
      Rng rng = base.fork(static_cast<std::uint64_t>(t));
      Matrix x = normalized_input(cfg.n, cfg.d, rng);
      OSAHeadParams head = init::init_osa_head(cfg.d, cfg.d_v(), cfg.alpha, rng);

      attention::LowRankAttention att = attention::score_matrix_small(x, head, ns);
      const double measured = basis::measured_ortho_error(att.b, att.exp_s);

      Matrix q = matmul(x, head.w_q);
      Matrix k = matmul(x, head.w_k);
      const double scale = head.alpha / std::sqrt(static_cast<double>(cfg.d_v()));
      const double s_norm = attention::score_spectral_norm(q, k, scale);
      const basis::OrthoBound bound = basis::ortho_error_bound(s_norm, linalg::singular_values(att.b));
      const double ms = ms_since(t0);

      auto& out = buckets[static_cast<std::size_t>(t)];
      out.push_back({"orthogonality", trial_tag(t) + "-measured-vs-tight", "ortho-error-bound",
                     measured, bound.tight, measured <= bound.tight, ms});
      out.push_back({"orthogonality", trial_tag(t) + "-tight-vs-loose", "ortho-error-bound",
                     bound.tight, bound.loose, bound.tight <= bound.loose + 1e-15, 0.0});
    });
  }
  guard.rethrow();
  append_all(rep, buckets);
}

void suite_rank(const RunConfig& cfg, Report& rep) {
  detail::require(cfg.n >= 2 * cfg.d, "rank suite needs n >= 2*d for the single-head basis");
  constexpr std::size_t kDepth = 16;
  std::vector<std::vector<CheckRecord>> buckets(cfg.trials);
  TrialGuard guard;
  const Rng base = Rng(cfg.seed).fork(kStreamRank);
#pragma omp parallel for schedule(dynamic) if (cfg.trials > 1)
  for (long long t = 0; t < static_cast<long long>(cfg.trials); ++t) {
    guard.run([&, t] {
      const auto t0 = Clock::now();
      Rng rng = base.fork(static_cast<std::uint64_t>(t));
      Matrix x0 = init::gaussian_matrix(cfg.n, cfg.d, rng);
      const std::uint64_t stack_seed = rng.fork(1).seed();

      auto osa = attention::rank_collapse_experiment(x0, kDepth, stack_seed,
                                                     attention::Mechanism::OSA,
                                                     basis::BasisMethod::qr());
      double dev = 0.0;
      for (std::size_t l = 1; l < osa.spectra.size(); ++l)
        for (std::size_t i = 0; i < osa.spectra[l].size(); ++i)
          dev = std::max(dev, std::fabs(osa.spectra[l][i] - osa.spectra[0][i]));

      auto ssa = attention::rank_collapse_experiment(x0, kDepth, stack_seed,
                                                     attention::Mechanism::SSA,
                                                     basis::BasisMethod::qr());
      auto ratio = [](const std::vector<double>& lam) {
        return lam[0] > 0.0 ? lam[1] / lam[0] : 0.0;
      };
      const double r0 = ratio(ssa.spectra.front());
      const double rL = ratio(ssa.spectra.back());
      const double ms = ms_since(t0);

      auto& out = buckets[static_cast<std::size_t>(t)];
      out.push_back({"rank", trial_tag(t) + "-spectrum-drift", "kernel-spectrum-preservation",
                     dev, 1e-8, dev <= 1e-8, ms});
      out.push_back({"rank", trial_tag(t) + "-softmax-ratio-decay", "rank-ratio-decay",
                     rL, r0, rL < r0, 0.0});
    });
  }
  guard.rethrow();
  append_all(rep, buckets);
}

struct JacobianCase {
  std::size_t n, d;
  basis::BasisKind kind;
  double alpha;
};

void suite_jacobian(const RunConfig& cfg, Report& rep) {
  const std::size_t shapes[][2] = {{3, 4}, {4, 4}, {6, 8}};
  const double alphas[] = {0.01, 0.1, 1.0};
  std::vector<JacobianCase> cases;
  for (const auto& sh : shapes)
    for (double a : alphas) {
      cases.push_back({sh[0], sh[1], basis::BasisKind::NewtonSchulz, a});
      if (sh[0] >= sh[1]) cases.push_back({sh[0], sh[1], basis::BasisKind::QR, a});
    }

  const std::size_t total = cases.size() * cfg.trials;
  std::vector<std::vector<CheckRecord>> buckets(total);
  TrialGuard guard;
  const Rng base = Rng(cfg.seed).fork(kStreamJacobian);
#pragma omp parallel for schedule(dynamic) if (total > 1)
  for (long long idx = 0; idx < static_cast<long long>(total); ++idx) {
    guard.run([&, idx] {
      const std::size_t c = static_cast<std::size_t>(idx) / cfg.trials;
      const std::size_t t = static_cast<std::size_t>(idx) % cfg.trials;
      const JacobianCase& jc = cases[c];
      const bool is_qr = jc.kind == basis::BasisKind::QR;
      const basis::BasisMethod method =
          is_qr ? basis::BasisMethod::qr()
                : basis::BasisMethod::newton_schulz(cfg.ns_iters, cfg.eps);

      const auto t0 = Clock::now();
      Rng rng = base.fork(static_cast<std::uint64_t>(c)).fork(static_cast<std::uint64_t>(t));
      Matrix x = normalized_input(jc.n, jc.d, rng);
      OSAHeadParams head = init::init_osa_head(jc.d, jc.d / 2, jc.alpha, rng);

      Matrix j = jacobian::jacobian_full(x, head, method);
      Matrix f = jacobian::jacobian_fd(x, head, method, jacobian::default_fd_step(x));
      const double fd_err = max_abs_diff(j, f);

      Matrix dx1 = init::gaussian_matrix(jc.n, jc.d, rng);
      Matrix dx2 = init::gaussian_matrix(jc.n, jc.d, rng);
      Matrix combo = 0.7 * dx1 + (-1.3) * dx2;
      Matrix lhs = jacobian::osa_jvp(x, combo, head, method);
      Matrix rhs = 0.7 * jacobian::osa_jvp(x, dx1, head, method) +
                   (-1.3) * jacobian::osa_jvp(x, dx2, head, method);
      const double lin_err = max_abs_diff(lhs, rhs);
      const double lin_tol = is_qr ? 1e-8 : 1e-10;
      const double ms = ms_since(t0);

      const std::string tag = "n" + std::to_string(jc.n) + "-d" + std::to_string(jc.d) +
                              (is_qr ? "-qr" : "-ns") + "-a" + tag_double(jc.alpha) +
                              "-" + trial_tag(t);
      auto& out = buckets[static_cast<std::size_t>(idx)];
      out.push_back({"jacobian", tag + "-fd", "jvp-vs-fd", fd_err, 1e-5, fd_err <= 1e-5, ms});
      out.push_back({"jacobian", tag + "-linearity", "jvp-linearity", lin_err, lin_tol,
                     lin_err <= lin_tol, 0.0});
    });
  }
  guard.rethrow();
  append_all(rep, buckets);
}

void suite_init(const RunConfig& cfg, Report& rep) {
  const std::size_t shapes[][2] = {{8, 2}, {16, 4}, {64, 8}};
  const std::size_t total = 3 * cfg.trials;
  std::vector<std::vector<CheckRecord>> buckets(total);
  TrialGuard guard;
  const Rng base = Rng(cfg.seed).fork(kStreamInit);
#pragma omp parallel for schedule(dynamic) if (total > 1)
  for (long long idx = 0; idx < static_cast<long long>(total); ++idx) {
    guard.run([&, idx] {
      const std::size_t s = static_cast<std::size_t>(idx) / cfg.trials;
      const std::size_t t = static_cast<std::size_t>(idx) % cfg.trials;
      const std::size_t d = shapes[s][0];
      const std::size_t dv = shapes[s][1];
      const auto t0 = Clock::now();
      Rng rng = base.fork(static_cast<std::uint64_t>(s)).fork(static_cast<std::uint64_t>(t));

      auto qk = init::init_query_key(d, dv, rng);
      Matrix wt = matmul_nt(qk.w_q, qk.w_k) - matmul_nt(qk.w_k, qk.w_q);
      auto sv = linalg::singular_values(wt);
      double qk_dev = 0.0;
      for (std::size_t i = 0; i < sv.size(); ++i)
        qk_dev = std::max(qk_dev, i < 2 * dv ? std::fabs(sv[i] - 1.0) : sv[i]);

      auto vo = init::init_value_output(d, dv, rng);
      Matrix f = matmul(vo.w_v, vo.w_o);
      auto fsv = linalg::singular_values(f);
      double vo_dev = 0.0;
      for (std::size_t i = 0; i < fsv.size(); ++i)
        vo_dev = std::max(vo_dev, i < dv ? std::fabs(fsv[i] - 1.0) : fsv[i]);
      const double ms = ms_since(t0);

      const std::string tag = "d" + std::to_string(d) + "-dv" + std::to_string(dv) + "-" + trial_tag(t);
      auto& out = buckets[static_cast<std::size_t>(idx)];
      out.push_back({"init", tag + "-coupling-spectrum", "coupling-unit-spectrum",
                     qk_dev, 1e-9, qk_dev <= 1e-9, ms});
      out.push_back({"init", tag + "-value-output-isometry", "value-output-isometry",
                     vo_dev, 1e-9, vo_dev <= 1e-9, 0.0});
    });
  }
  guard.rethrow();
  append_all(rep, buckets);

  // Distributional checks on the frame sampler, run once per invocation.
  {
    const auto t0 = Clock::now();
    Rng rng = base.fork(1000);
    double ortho = 0.0;
    for (int i = 0; i < 50; ++i) {
      Matrix q = init::sample_stiefel(16, 4, rng);
      ortho = std::max(ortho, max_abs_diff(matmul_tn(q, q), Matrix::identity(4)));
    }
    rep.checks.push_back({"init", "frame-orthonormality", "frame-orthonormality",
                          ortho, 1e-12, ortho <= 1e-12, ms_since(t0)});
  }
  {
    const auto t0 = Clock::now();
    Rng rng = base.fork(1001);
    const int reps = 10000;
    int positive = 0;
    for (int i = 0; i < reps; ++i)
      if (init::sample_stiefel(1, 1, rng)(0, 0) > 0.0) ++positive;
    const double frac = static_cast<double>(positive) / reps;
    rep.checks.push_back({"init", "sign-balance", "sign-balance", frac, 0.53,
                          frac >= 0.47 && frac <= 0.53, ms_since(t0)});
  }
  {
    const auto t0 = Clock::now();
    Rng rng = base.fork(1002);
    const int reps = 10000;
    std::vector<double> angles(reps);
    for (int i = 0; i < reps; ++i) {
      Matrix q = init::sample_stiefel(2, 1, rng);
      angles[static_cast<std::size_t>(i)] = std::atan2(q(1, 0), q(0, 0));
    }
    std::sort(angles.begin(), angles.end());
    double ks = 0.0;
    const double pi = 3.14159265358979323846;
    for (int i = 0; i < reps; ++i) {
      const double cdf = (angles[static_cast<std::size_t>(i)] + pi) / (2.0 * pi);
      ks = std::max(ks, std::max(cdf - static_cast<double>(i) / reps,
                                 static_cast<double>(i + 1) / reps - cdf));
    }
    rep.checks.push_back({"init", "circle-uniformity", "circle-uniformity", ks, 0.02,
                          ks <= 0.02, ms_since(t0)});
  }
  {
    const auto t0 = Clock::now();
    Rng a(cfg.seed), b(cfg.seed);
    const double diff = max_abs_diff(init::gaussian_matrix(8, 8, a), init::gaussian_matrix(8, 8, b));
    rep.checks.push_back({"init", "draw-determinism", "draw-determinism", diff, 0.0,
                          diff == 0.0, ms_since(t0)});
  }
}

// Index into the Jacobian spectrum at the effective rank of the value-path
// term, the pairing the perturbation argument compares against.
double kappa_at_value_rank(const jacobian::ConditionDetail& det, double rank_tol) {
  const auto& s2 = det.sigma_j2;
  if (s2.empty() || s2.front() <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  std::size_t r2 = 0;
  for (double s : s2)
    if (s > rank_tol * s2.front()) ++r2;
  if (r2 == 0 || r2 > det.sigma_j.size() || det.sigma_j[r2 - 1] <= 0.0)
    return std::numeric_limits<double>::quiet_NaN();
  return det.sigma_j.front() / det.sigma_j[r2 - 1];
}

double kappa_bound_rhs(const jacobian::JacobianReport& r) {
  const double denom = 1.0 - r.delta_hat - r.j1_norm;
  if (denom <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (1.0 + r.delta_hat + r.j1_norm) / denom;
}

void suite_bounds(const RunConfig& cfg, Report& rep) {
  const std::vector<double> alphas = {1e-4, 1e-3, 1e-2, 1e-1};
  constexpr double kRankTol = 1e-7;
  std::vector<std::vector<CheckRecord>> buckets(cfg.trials);
  TrialGuard guard;
  const Rng base = Rng(cfg.seed).fork(kStreamBounds);
#pragma omp parallel for schedule(dynamic) if (cfg.trials > 1)
  for (long long t = 0; t < static_cast<long long>(cfg.trials); ++t) {
    guard.run([&, t] {
      const auto t0 = Clock::now();
      Rng rng = base.fork(static_cast<std::uint64_t>(t));
      Matrix x = normalized_input(cfg.n, cfg.d, rng);
      OSAHeadParams head = init::init_osa_head(cfg.d, cfg.d_v(), 1.0, rng);

      auto& out = buckets[static_cast<std::size_t>(t)];
      std::vector<double> ratios;
      double kappa_smallest = std::numeric_limits<double>::quiet_NaN();
      for (double a : alphas) {
        head.alpha = a;
        auto det = jacobian::condition_detail(x, head, cfg.method(), kRankTol);
        const auto& r = det.report;

        double weyl = 0.0;
        for (std::size_t i = 0; i < det.sigma_j.size(); ++i) {
          const double s2 = i < det.sigma_j2.size() ? det.sigma_j2[i] : 0.0;
          weyl = std::max(weyl, std::fabs(det.sigma_j[i] - s2));
        }
        const double kappa = kappa_at_value_rank(det, kRankTol);
        const double rhs = kappa_bound_rhs(r);
        if (a == alphas.front()) kappa_smallest = kappa;
        ratios.push_back(r.j1_norm / a);

        const std::string tag = "a" + tag_double(a) + "-" + trial_tag(t);
        out.push_back({"bounds", tag + "-weyl", "weyl-perturbation", weyl,
                       r.j1_norm + 1e-8, weyl <= r.j1_norm + 1e-8, 0.0});
        out.push_back({"bounds", tag + "-kappa-bound", "condition-number-bound", kappa, rhs,
                       std::isfinite(rhs) && std::isfinite(kappa) && kappa <= rhs, 0.0});
        out.push_back({"bounds", tag + "-fd", "jvp-vs-fd", r.fd_max_abs_err, 1e-5,
                       r.fd_max_abs_err <= 1e-5, 0.0});
      }
      const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
      const double band = (*lo > 0.0) ? *hi / *lo : std::numeric_limits<double>::quiet_NaN();
      const double ms = ms_since(t0);
      out.push_back({"bounds", trial_tag(t) + "-score-term-linear-band", "score-term-scaling",
                     band, 3.0, std::isfinite(band) && band <= 3.0, ms});
      out.push_back({"bounds", trial_tag(t) + "-kappa-near-one", "near-isometry-at-small-alpha",
                     std::fabs(kappa_smallest - 1.0), 1e-2,
                     std::isfinite(kappa_smallest) && std::fabs(kappa_smallest - 1.0) <= 1e-2, 0.0});
    });
  }
  guard.rethrow();
  append_all(rep, buckets);
}

}  // namespace

basis::BasisMethod RunConfig::method() const {
  if (basis == "qr") return basis::BasisMethod::qr();
  return basis::BasisMethod::newton_schulz(ns_iters, eps);
}

void RunConfig::validate() const {
  auto fail = [](const char* msg) { throw std::invalid_argument(msg); };
  if (n == 0 || d == 0 || heads == 0) fail("n, d and heads must be positive");
  if (d % heads != 0) fail("heads must divide d");
  if (2 * d_v() > d) fail("per-head width must satisfy 2*(d/heads) <= d, use heads >= 2");
  if (n < 2 * d_v()) fail("n must be at least 2*(d/heads) so the basis has full column rank");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) fail("alpha must be positive and finite");
  if (basis != "qr" && basis != "ns") fail("basis must be qr or ns");
  if (ns_iters < 0 || ns_iters > 64) fail("ns-iters must be in [0, 64]");
  if (!(eps > 0.0) || !std::isfinite(eps)) fail("eps must be positive and finite");
  if (trials == 0) fail("trials must be positive");
  if (format != "json" && format != "csv") fail("format must be json or csv");
}

std::map<std::string, std::string> RunConfig::echo() const {
  return {{"seed", std::to_string(seed)},
          {"n", std::to_string(n)},
          {"d", std::to_string(d)},
          {"heads", std::to_string(heads)},
          {"alpha", report::format_double(alpha)},
          {"basis", basis},
          {"ns_iters", std::to_string(ns_iters)},
          {"eps", report::format_double(eps)},
          {"trials", std::to_string(trials)},
          {"format", format}};
}

const std::vector<std::string> kAllSuites = {"orthogonality", "rank", "jacobian", "init",
                                             "bounds"};

report::Report run_check(const RunConfig& cfg, std::vector<std::string> suites) {
  cfg.validate();
  if (suites.empty()) suites = kAllSuites;
  for (const auto& s : suites)
    if (std::find(kAllSuites.begin(), kAllSuites.end(), s) == kAllSuites.end())
      throw std::invalid_argument("unknown suite: " + s);

  Report rep;
  rep.command = "check";
  rep.config = cfg.echo();
  for (const auto& s : suites) {
    if (s == "orthogonality") suite_orthogonality(cfg, rep);
    else if (s == "rank") suite_rank(cfg, rep);
    else if (s == "jacobian") suite_jacobian(cfg, rep);
    else if (s == "init") suite_init(cfg, rep);
    else if (s == "bounds") suite_bounds(cfg, rep);
  }
  return rep;
}

report::Report run_sweep_alpha(const RunConfig& cfg, std::vector<double> alphas,
                               std::vector<SweepRow>* rows) {
  cfg.validate();
  if (alphas.empty()) alphas = {1e-4, 1e-3, 1e-2, 1e-1};
  for (double a : alphas)
    detail::require(a > 0.0 && std::isfinite(a), "sweep alphas must be positive and finite");
  std::sort(alphas.begin(), alphas.end());

  Report rep;
  rep.command = "sweep-alpha";
  rep.config = cfg.echo();

  const std::size_t total = alphas.size() * cfg.trials;
  std::vector<SweepRow> local(total);
  std::vector<CheckRecord> recs(total);
  TrialGuard guard;
  const Rng base = Rng(cfg.seed).fork(kStreamSweep);
#pragma omp parallel for schedule(dynamic) if (total > 1)
  for (long long idx = 0; idx < static_cast<long long>(total); ++idx) {
    guard.run([&, idx] {
      const std::size_t ai = static_cast<std::size_t>(idx) / cfg.trials;
      const std::size_t t = static_cast<std::size_t>(idx) % cfg.trials;
      const auto t0 = Clock::now();
      Rng rng = base.fork(static_cast<std::uint64_t>(t));
      Matrix x = normalized_input(cfg.n, cfg.d, rng);
      OSAHeadParams head = init::init_osa_head(cfg.d, cfg.d_v(), 1.0, rng);
      head.alpha = alphas[ai];

      auto det = jacobian::condition_detail(x, head, cfg.method());
      const auto& r = det.report;
      SweepRow row;
      row.alpha = alphas[ai];
      row.kappa_eff = r.kappa_eff;
      row.j1_norm = r.j1_norm;
      row.delta_hat = r.delta_hat;
      row.bound_rhs = kappa_bound_rhs(r);
      row.trial = t;
      local[static_cast<std::size_t>(idx)] = row;

      const double kappa = kappa_at_value_rank(det, 1e-7);
      const std::string tag = "a" + tag_double(row.alpha) + "-" + trial_tag(t);
      recs[static_cast<std::size_t>(idx)] =
          {"sweep-alpha", tag, "condition-number-bound", kappa, row.bound_rhs,
           std::isfinite(row.bound_rhs) && std::isfinite(kappa) && kappa <= row.bound_rhs,
           ms_since(t0)};
    });
  }
  guard.rethrow();
  rep.checks = std::move(recs);
  if (rows) *rows = std::move(local);
  return rep;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::vector<std::vector<std::string>> body;
  body.reserve(rows.size());
  for (const auto& r : rows)
    body.push_back({report::format_double(r.alpha), report::format_double(r.kappa_eff),
                    report::format_double(r.j1_norm), report::format_double(r.delta_hat),
                    report::format_double(r.bound_rhs), std::to_string(r.trial)});
  return report::table_csv({"alpha", "kappa_eff", "j1_norm", "delta_hat", "bound_rhs", "trial"},
                           body);
}

report::Report run_rank_demo(const RunConfig& cfg, std::size_t depth,
                             const std::string& mechanism, std::vector<RankRow>* rows) {
  cfg.validate();
  detail::require(depth >= 1 && depth <= 64, "depth must be in [1, 64]");
  detail::require(mechanism == "osa" || mechanism == "ssa" || mechanism == "both",
                  "mechanism must be osa, ssa or both");
  const bool do_osa = mechanism != "ssa";
  const bool do_ssa = mechanism != "osa";
  if (do_osa)
    detail::require(cfg.n >= 2 * cfg.d, "rank demo needs n >= 2*d for the single-head basis");

  Report rep;
  rep.command = "rank-demo";
  rep.config = cfg.echo();
  rep.config["depth"] = std::to_string(depth);
  rep.config["mechanism"] = mechanism;

  Rng rng = Rng(cfg.seed).fork(kStreamRankDemo);
  Matrix x0 = init::gaussian_matrix(cfg.n, cfg.d, rng);
  const std::uint64_t stack_seed = rng.fork(1).seed();
  std::vector<RankRow> local;

  auto emit = [&](const char* name, const attention::RankCollapseResult& res) {
    for (std::size_t l = 0; l < res.spectra.size(); ++l) {
      RankRow row;
      row.mechanism = name;
      row.layer = l;
      const auto& lam = res.spectra[l];
      row.top.assign(lam.begin(), lam.begin() + static_cast<long>(std::min<std::size_t>(5, lam.size())));
      for (double v : lam)
        if (lam[0] > 0.0 && v > 1e-7 * lam[0]) ++row.effective_rank;
      local.push_back(std::move(row));
    }
  };

  if (do_osa) {
    const auto t0 = Clock::now();
    auto res = attention::rank_collapse_experiment(x0, depth, stack_seed,
                                                   attention::Mechanism::OSA,
                                                   basis::BasisMethod::qr());
    emit("osa", res);
    double dev = 0.0;
    for (std::size_t l = 1; l < res.spectra.size(); ++l)
      for (std::size_t i = 0; i < res.spectra[l].size(); ++i)
        dev = std::max(dev, std::fabs(res.spectra[l][i] - res.spectra[0][i]));
    rep.checks.push_back({"rank-demo", "osa-spectrum-drift", "kernel-spectrum-preservation",
                          dev, 1e-8, dev <= 1e-8, ms_since(t0)});
  }
  if (do_ssa) {
    const auto t0 = Clock::now();
    auto res = attention::rank_collapse_experiment(x0, depth, stack_seed,
                                                   attention::Mechanism::SSA,
                                                   basis::BasisMethod::qr());
    emit("ssa", res);
    auto ratio = [](const std::vector<double>& lam) {
      return lam[0] > 0.0 ? lam[1] / lam[0] : 0.0;
    };
    const double r0 = ratio(res.spectra.front());
    const double rL = ratio(res.spectra.back());
    rep.checks.push_back({"rank-demo", "ssa-ratio-decay", "rank-ratio-decay", rL, r0,
                          rL < r0, ms_since(t0)});
  }
  if (rows) *rows = std::move(local);
  return rep;
}

std::string rank_csv(const std::vector<RankRow>& rows) {
  std::vector<std::string> header = {"mechanism", "layer"};
  for (int i = 1; i <= 5; ++i) header.push_back("lambda" + std::to_string(i));
  header.push_back("effective_rank");
  std::vector<std::vector<std::string>> body;
  for (const auto& r : rows) {
    std::vector<std::string> row = {r.mechanism, std::to_string(r.layer)};
    for (std::size_t i = 0; i < 5; ++i)
      row.push_back(i < r.top.size() ? report::format_double(r.top[i]) : "");
    row.push_back(std::to_string(r.effective_rank));
    body.push_back(std::move(row));
  }
  return report::table_csv(header, body);
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(xs[i]) - mx;
    num += dx * (std::log(ys[i]) - my);
    den += dx * dx;
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace

report::Report run_bench(const RunConfig& cfg, std::vector<std::size_t> n_list,
                         std::size_t reps, int threads, std::vector<BenchRow>* rows) {
  cfg.validate();
  if (n_list.empty()) n_list = {512, 1024, 2048, 4096};
  for (std::size_t n : n_list)
    detail::require(n >= 2 * cfg.d_v(), "bench sizes must be at least 2*(d/heads)");
  detail::require(reps >= 1 && reps <= 100, "reps must be in [1, 100]");

  Report rep;
  rep.command = "bench";
  rep.config = cfg.echo();
  rep.config["reps"] = std::to_string(reps);
  rep.config["threads"] = std::to_string(threads);

#ifdef _OPENMP
  const int saved_threads = omp_get_max_threads();
  omp_set_num_threads(threads >= 1 ? threads : saved_threads);
#else
  (void)threads;
#endif

  const Rng base = Rng(cfg.seed).fork(kStreamBench);
  std::vector<BenchRow> local;
  for (std::size_t n : n_list) {
    Rng rng = base.fork(n);
    Matrix x = init::gaussian_matrix(n, cfg.d, rng);
    std::vector<OSAHeadParams> heads;
    for (std::size_t h = 0; h < cfg.heads; ++h)
      heads.push_back(init::init_osa_head(cfg.d, cfg.d_v(), cfg.alpha, rng));
    std::vector<attention::SSAHeadParams> ssa_heads;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      attention::SSAHeadParams p;
      p.w_q = init::xavier_uniform(cfg.d, cfg.d_v(), rng);
      p.w_k = init::xavier_uniform(cfg.d, cfg.d_v(), rng);
      p.w_v = init::xavier_uniform(cfg.d, cfg.d_v(), rng);
      p.w_o = init::xavier_uniform(cfg.d_v(), cfg.d, rng);
      ssa_heads.push_back(std::move(p));
    }

    auto run_mech = [&](const std::string& name, auto&& fn) {
      fn();  // warm-up, not timed
      alloc_tracker::enable(true);
      alloc_tracker::reset();
      fn();
      const std::size_t peak = alloc_tracker::peak_bytes();
      alloc_tracker::enable(false);
      std::vector<double> times;
      for (std::size_t r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        fn();
        times.push_back(ms_since(t0));
      }
      local.push_back({n, name, median_of(times), peak});
    };

    run_mech("osa_qr", [&] { attention::mosa_forward(x, heads, basis::BasisMethod::qr()); });
    run_mech("osa_ns", [&] {
      attention::mosa_forward(x, heads, basis::BasisMethod::newton_schulz(cfg.ns_iters, cfg.eps));
    });
    run_mech("ssa", [&] {
      Matrix acc = attention::ssa_head_forward(x, ssa_heads[0]);
      for (std::size_t h = 1; h < ssa_heads.size(); ++h)
        acc += attention::ssa_head_forward(x, ssa_heads[h]);
    });
  }

#ifdef _OPENMP
  omp_set_num_threads(saved_threads);
#endif

  // Growth checks apply when the sizes form an increasing doubling ladder.
  bool doubling = n_list.size() >= 2;
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (n_list[i] != 2 * n_list[i - 1]) doubling = false;
  if (doubling) {
    auto times_of = [&](const std::string& mech) {
      std::vector<double> t;
      for (const auto& r : local)
        if (r.mechanism == mech) t.push_back(r.median_ms);
      return t;
    };
    auto peaks_of = [&](const std::string& mech) {
      std::vector<double> p;
      for (const auto& r : local)
        if (r.mechanism == mech) p.push_back(static_cast<double>(r.peak_bytes));
      return p;
    };
    std::vector<double> ns(n_list.size());
    std::transform(n_list.begin(), n_list.end(), ns.begin(),
                   [](std::size_t v) { return static_cast<double>(v); });

    for (const char* mech : {"osa_qr", "osa_ns"}) {
      const auto t = times_of(mech);
      double worst = 0.0;
      for (std::size_t i = 1; i < t.size(); ++i)
        if (t[i - 1] > 0.0) worst = std::max(worst, t[i] / t[i - 1]);
      rep.checks.push_back({"bench", std::string(mech) + "-doubling-max", "near-linear-time",
                            worst, 3.0, worst > 0.0 && worst <= 3.0, 0.0});
      const double slope = loglog_slope(ns, peaks_of(mech));
      rep.checks.push_back({"bench", std::string(mech) + "-buffer-slope", "linear-memory",
                            slope, 1.1, slope >= 0.9 && slope <= 1.1, 0.0});
    }
    const auto t = times_of("ssa");
    const double last = t.size() >= 2 && t[t.size() - 2] > 0.0 ? t.back() / t[t.size() - 2] : 0.0;
    rep.checks.push_back({"bench", "ssa-doubling-last", "quadratic-time-reference", last, 3.0,
                          last >= 3.0, 0.0});
  }
  if (rows) *rows = std::move(local);
  return rep;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::vector<std::vector<std::string>> body;
  body.reserve(rows.size());
  for (const auto& r : rows)
    body.push_back({std::to_string(r.n), r.mechanism, report::format_double(r.median_ms),
                    std::to_string(r.peak_bytes)});
  return report::table_csv({"n", "mechanism", "median_ms", "peak_bytes"}, body);
}

report::Report run_oracle(const RunConfig& cfg, const std::string& which) {
  cfg.validate();
  detail::require(which == "lowrank" || which == "frechet" || which == "jacobian",
                  "oracle selector must be lowrank, frechet or jacobian");

  Report rep;
  rep.command = "oracle";
  rep.config = cfg.echo();
  rep.config["which"] = which;

  const Rng base = Rng(cfg.seed).fork(kStreamOracle);
  std::vector<CheckRecord> recs(cfg.trials);
  TrialGuard guard;

  if (which == "lowrank") {
    detail::require(cfg.n <= 64, "lowrank oracle caps n at 64 for the dense exponential");
#pragma omp parallel for schedule(dynamic) if (cfg.trials > 1)
    for (long long t = 0; t < static_cast<long long>(cfg.trials); ++t) {
      guard.run([&, t] {
        const auto t0 = Clock::now();
        Rng rng = base.fork(static_cast<std::uint64_t>(t));
        Matrix x = normalized_input(cfg.n, cfg.d, rng);
        OSAHeadParams head = init::init_osa_head(cfg.d, cfg.d_v(), cfg.alpha, rng);
        // The identity is exact only for an exactly orthonormal basis.
        auto att = attention::score_matrix_small(x, head, basis::BasisMethod::qr());
        Matrix lr = attention::materialize_attention(att);
        Matrix dense = oracle::dense_attention_operator(x, head);
        const double rel = (lr - dense).frobenius_norm() / dense.frobenius_norm();
        recs[static_cast<std::size_t>(t)] = {"oracle", trial_tag(t), "low-rank-exp-identity",
                                             rel, 1e-9, rel <= 1e-9, ms_since(t0)};
      });
    }
  } else if (which == "frechet") {
    const std::size_t r = 2 * cfg.d_v();
#pragma omp parallel for schedule(dynamic) if (cfg.trials > 1)
    for (long long t = 0; t < static_cast<long long>(cfg.trials); ++t) {
      guard.run([&, t] {
        const auto t0 = Clock::now();
        Rng rng = base.fork(static_cast<std::uint64_t>(t));
        Matrix g = init::gaussian_matrix(r, r, rng);
        Matrix a = 0.5 * (g - g.transpose());
        const double s = linalg::spectral_norm(a);
        if (s > 2.0) a *= 2.0 / s;
        Matrix e = init::gaussian_matrix(r, r, rng);
        const double ef = e.frobenius_norm();
        if (ef > 0.0) e *= 1.0 / ef;
        Matrix block = jacobian::expm_frechet(a, e);
        Matrix quad = oracle::frechet_quadrature(a, e, 64);
        const double err = max_abs_diff(block, quad);
        recs[static_cast<std::size_t>(t)] = {"oracle", trial_tag(t),
                                             "block-frechet-vs-quadrature", err, 1e-8,
                                             err <= 1e-8, ms_since(t0)};
      });
    }
  } else {
    detail::require(cfg.n * cfg.d <= jacobian::kMaxDenseDim,
                    "jacobian oracle needs n*d <= 512");
#pragma omp parallel for schedule(dynamic) if (cfg.trials > 1)
    for (long long t = 0; t < static_cast<long long>(cfg.trials); ++t) {
      guard.run([&, t] {
        const auto t0 = Clock::now();
        Rng rng = base.fork(static_cast<std::uint64_t>(t));
        Matrix x = normalized_input(cfg.n, cfg.d, rng);
        OSAHeadParams head = init::init_osa_head(cfg.d, cfg.d_v(), cfg.alpha, rng);
        Matrix j = jacobian::jacobian_full(x, head, cfg.method());
        Matrix f = jacobian::jacobian_fd(x, head, cfg.method(), jacobian::default_fd_step(x));
        const double err = max_abs_diff(j, f);
        recs[static_cast<std::size_t>(t)] = {"oracle", trial_tag(t), "jvp-vs-fd", err, 1e-5,
                                             err <= 1e-5, ms_since(t0)};
      });
    }
  }
  guard.rethrow();
  rep.checks = std::move(recs);
  return rep;
}

}  // namespace osa::harness
