// Command-line front end: check suites, alpha sweep, rank demo, scaling bench
// and oracle cross-checks over a shared flag set. Exit code 0 means every
// check in the produced report passed, 1 means at least one failed, 2 means
// the invocation or configuration was invalid.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "osa/report.hpp"
#include "osa/suites.hpp"

namespace {

using osa::harness::RunConfig;

struct Cli {
  RunConfig cfg;
  std::vector<std::string> suites;
  std::vector<double> alphas;
  std::size_t depth = 16;
  std::string mechanism = "both";
  std::vector<std::size_t> sizes;
  std::size_t reps = 5;
  int threads = 1;
  std::string which = "lowrank";
};

void write_payload(const std::string& payload, const std::string& out_path) {
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw std::invalid_argument("cannot open output file: " + out_path);
    f << payload;
  }
  std::cout << payload;
  if (!payload.empty() && payload.back() != '\n') std::cout << '\n';
}

// Row-producing commands attach their table under "rows" in json mode and
// emit the bare table in csv mode; plain commands emit the report itself.
std::string render(const osa::report::Report& rep, const std::string& format,
                   const nlohmann::ordered_json& rows, const std::string& rows_csv) {
  if (format == "csv") return rows.is_null() ? osa::report::to_csv(rep) : rows_csv;
  if (rows.is_null()) return osa::report::to_json(rep);
  auto j = nlohmann::ordered_json::parse(osa::report::to_json(rep));
  j["rows"] = rows;
  return j.dump(2);
}

int finish(const osa::report::Report& rep, const Cli& cli,
           const nlohmann::ordered_json& rows = nullptr, const std::string& rows_csv = "") {
  std::string why;
  if (!osa::report::validate(rep, &why)) {
    std::cerr << "internal error: malformed report: " << why << "\n";
    return 2;
  }
  write_payload(render(rep, cli.cfg.format, rows, rows_csv), cli.cfg.out);

  std::size_t failed = 0;
  for (const auto& c : rep.checks)
    if (!c.pass) ++failed;
  if (failed == 0) {
    std::cerr << "ok: " << rep.checks.size() << " checks passed\n";
    return 0;
  }
  std::cerr << "FAIL: " << failed << "/" << rep.checks.size() << " checks failed\n";
  for (const auto& c : rep.checks)
    if (!c.pass)
      std::cerr << "  " << c.suite << "/" << c.name << " measured="
                << osa::report::format_double(c.measured) << " bound="
                << osa::report::format_double(c.bound) << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  CLI::App app{"low-rank orthogonal attention checks and benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "flat key=value config file; command-line flags override it");

  app.add_option("--seed", cli.cfg.seed, "base seed for all draws")->capture_default_str();
  app.add_option("--n", cli.cfg.n, "token count")->capture_default_str();
  app.add_option("--d", cli.cfg.d, "model width")->capture_default_str();
  app.add_option("--heads", cli.cfg.heads, "head count (must divide d, at least 2)")
      ->capture_default_str();
  app.add_option("--alpha", cli.cfg.alpha, "score gate")->capture_default_str();
  app.add_option("--basis", cli.cfg.basis, "basis backend")
      ->check(CLI::IsMember({"qr", "ns"}))
      ->capture_default_str();
  app.add_option("--ns-iters", cli.cfg.ns_iters, "polar iteration count for the ns basis")
      ->capture_default_str();
  app.add_option("--eps", cli.cfg.eps, "pre-normalization offset for the ns basis")
      ->capture_default_str();
  app.add_option("--trials", cli.cfg.trials, "independent trials per check")
      ->capture_default_str();
  app.add_option("--out", cli.cfg.out, "also write the payload to this file");
  app.add_option("--format", cli.cfg.format, "payload format")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();

  auto* check = app.add_subcommand("check", "run property suites and report pass/fail");
  check->add_option("--suite", cli.suites, "subset of suites to run (default: all)")
      ->check(CLI::IsMember(osa::harness::kAllSuites));

  auto* sweep = app.add_subcommand("sweep-alpha", "conditioning metrics across alpha values");
  sweep->add_option("--alphas", cli.alphas, "alpha grid (default: 1e-4 1e-3 1e-2 1e-1)");

  auto* rank = app.add_subcommand("rank-demo", "kernel spectra through a deep stack");
  rank->add_option("--depth", cli.depth, "block count")->capture_default_str();
  rank->add_option("--mechanism", cli.mechanism, "which stacks to run")
      ->check(CLI::IsMember({"osa", "ssa", "both"}))
      ->capture_default_str();

  auto* bench = app.add_subcommand("bench", "forward-pass scaling across token counts");
  bench->add_option("--sizes", cli.sizes, "token counts (default: 512 1024 2048 4096)");
  bench->add_option("--reps", cli.reps, "timed repetitions per point")->capture_default_str();
  bench->add_option("--threads", cli.threads, "worker threads while timing")
      ->capture_default_str();

  auto* oracle = app.add_subcommand("oracle", "cross-check fast paths against slow references");
  oracle->add_option("--which", cli.which, "lowrank | frechet | jacobian")
      ->check(CLI::IsMember({"lowrank", "frechet", "jacobian"}))
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (check->parsed()) return finish(osa::harness::run_check(cli.cfg, cli.suites), cli);
    if (sweep->parsed()) {
      std::vector<osa::harness::SweepRow> rows;
      auto rep = osa::harness::run_sweep_alpha(cli.cfg, cli.alphas, &rows);
      nlohmann::ordered_json jr = nlohmann::ordered_json::array();
      for (const auto& r : rows)
        jr.push_back({{"alpha", r.alpha},
                      {"kappa_eff", r.kappa_eff},
                      {"j1_norm", r.j1_norm},
                      {"delta_hat", r.delta_hat},
                      {"bound_rhs", std::isfinite(r.bound_rhs)
                                        ? nlohmann::ordered_json(r.bound_rhs)
                                        : nlohmann::ordered_json("nan")},
                      {"trial", r.trial}});
      return finish(rep, cli, jr, osa::harness::sweep_csv(rows));
    }
    if (rank->parsed()) {
      std::vector<osa::harness::RankRow> rows;
      auto rep = osa::harness::run_rank_demo(cli.cfg, cli.depth, cli.mechanism, &rows);
      nlohmann::ordered_json jr = nlohmann::ordered_json::array();
      for (const auto& r : rows)
        jr.push_back({{"mechanism", r.mechanism},
                      {"layer", r.layer},
                      {"top", r.top},
                      {"effective_rank", r.effective_rank}});
      return finish(rep, cli, jr, osa::harness::rank_csv(rows));
    }
    if (bench->parsed()) {
      std::vector<osa::harness::BenchRow> rows;
      auto rep = osa::harness::run_bench(cli.cfg, cli.sizes, cli.reps, cli.threads, &rows);
      nlohmann::ordered_json jr = nlohmann::ordered_json::array();
      for (const auto& r : rows)
        jr.push_back({{"n", r.n},
                      {"mechanism", r.mechanism},
                      {"median_ms", r.median_ms},
                      {"peak_bytes", r.peak_bytes}});
      return finish(rep, cli, jr, osa::harness::bench_csv(rows));
    }
    if (oracle->parsed()) return finish(osa::harness::run_oracle(cli.cfg, cli.which), cli);
  } catch (const std::invalid_argument& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 2;
}
