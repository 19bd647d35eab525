#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "osa/basis.hpp"
#include "osa/report.hpp"

namespace osa::harness {

struct RunConfig {
  std::uint64_t seed = 42;
  std::size_t n = 16;
  std::size_t d = 8;
  std::size_t heads = 2;
  double alpha = 0.1;
  std::string basis = "qr";  // qr | ns
  int ns_iters = 6;
  double eps = 1e-6;
  std::size_t trials = 10;
  std::string out;              // output path, empty = stdout only
  std::string format = "json";  // json | csv

  std::size_t d_v() const { return d / heads; }
  basis::BasisMethod method() const;
  void validate() const;  // throws std::invalid_argument on bad values
  std::map<std::string, std::string> echo() const;
};

// Suite names accepted by run_check; empty selection means all of them.
extern const std::vector<std::string> kAllSuites;

report::Report run_check(const RunConfig& cfg, std::vector<std::string> suites);

struct SweepRow {
  double alpha = 0.0;
  double kappa_eff = 0.0;
  double j1_norm = 0.0;
  double delta_hat = 0.0;
  double bound_rhs = 0.0;  // NaN when the bound denominator is not positive
  std::size_t trial = 0;
};

report::Report run_sweep_alpha(const RunConfig& cfg, std::vector<double> alphas,
                               std::vector<SweepRow>* rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct RankRow {
  std::string mechanism;
  std::size_t layer = 0;
  std::vector<double> top;  // leading kernel eigenvalues
  std::size_t effective_rank = 0;
};

report::Report run_rank_demo(const RunConfig& cfg, std::size_t depth,
                             const std::string& mechanism, std::vector<RankRow>* rows);
std::string rank_csv(const std::vector<RankRow>& rows);

struct BenchRow {
  std::size_t n = 0;
  std::string mechanism;
  double median_ms = 0.0;
  std::size_t peak_bytes = 0;
};

report::Report run_bench(const RunConfig& cfg, std::vector<std::size_t> n_list,
                         std::size_t reps, int threads, std::vector<BenchRow>* rows);
std::string bench_csv(const std::vector<BenchRow>& rows);

report::Report run_oracle(const RunConfig& cfg, const std::string& which);

}  // namespace osa::harness
