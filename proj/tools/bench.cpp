#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "elastic/bench/harness.hpp"

using namespace elastic;
using namespace elastic::bench;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "csv";

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "cost model / scenario config file");
    app->add_option("--seed", seed, "seed for keys and profiling")->capture_default_str();
    app->add_option("--out", out, "output file (stdout when omitted)");
    app->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  }

  Settings settings() const {
    const Config cfg = config_path.empty() ? Config{} : Config::load(config_path);
    return Settings::from_config(cfg, seed);
  }

  void emit(const std::vector<BenchResult>& results) const {
    if (!out.empty()) {
      export_results(results, format, out);
      return;
    }
    if (format == "json")
      std::cout << to_json(results).dump(2) << "\n";
    else
      std::cout << to_csv(results);
  }
};

void print_report(const RequirementReport& rep) {
  for (const auto& r : rep.rules)
    std::printf("%-4s %-9s %-34s value=%.4f threshold=%.4f\n", r.pass ? "PASS" : "FAIL",
                std::string(orch::to_string(r.scheme)).c_str(), r.rule.c_str(), r.value, r.threshold);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Control-plane and data-plane benchmarks on the simulated fabric"};
  app.require_subcommand(1);

  Common cp_common;
  std::string start = "cold";
  std::string cp_scheme = "swift";
  std::size_t repeats = 10;
  auto* cp = app.add_subcommand("control-plane", "end-to-end start latency for one start kind and scheme");
  cp->add_option("--start", start)->check(CLI::IsMember({"cold", "warm", "fork"}))->capture_default_str();
  cp->add_option("--scheme", cp_scheme)
      ->check(CLI::IsMember({"swift", "uncached", "kernel", "baseline"}))
      ->capture_default_str();
  cp->add_option("--repeats", repeats)->check(CLI::PositiveNumber)->capture_default_str();
  cp_common.attach(cp);

  Common dp_common;
  std::string op = "read";
  std::string mode = "sync";
  std::string dp_scheme = "swift";
  DataPlaneOptions dp_opt;
  auto* dp = app.add_subcommand("data-plane", "throughput and latency with one QP per client thread");
  dp->add_option("--op", op)->check(CLI::IsMember({"read", "write", "send-recv"}))->capture_default_str();
  dp->add_option("--mode", mode)->check(CLI::IsMember({"sync", "async"}))->capture_default_str();
  dp->add_option("--scheme", dp_scheme)->check(CLI::IsMember({"swift", "uncached", "kernel"}))->capture_default_str();
  dp->add_option("--threads", dp_opt.threads)->capture_default_str();
  dp->add_option("--duration", dp_opt.duration_s, "virtual seconds")->capture_default_str();
  dp->add_option("--batch", dp_opt.batch, "WRs per post call in async mode")->capture_default_str();
  dp->add_option("--pool", dp_opt.pool, "QPs available to client threads")->capture_default_str();
  dp->add_flag("--wall-clock", dp_opt.wall_clock, "run client threads as real threads");
  dp_common.attach(dp);

  std::string check_in;
  auto* check = app.add_subcommand("check", "latency requirement check over exported results");
  check->add_option("--in", check_in)->required();

  Common all_common;
  MatrixOptions matrix;
  auto* all = app.add_subcommand("all", "every control-plane and data-plane cell");
  all->add_option("--repeats", matrix.repeats)->check(CLI::PositiveNumber)->capture_default_str();
  all->add_option("--duration", matrix.duration_s, "virtual seconds per data-plane cell")->capture_default_str();
  all->add_option("--batch", matrix.batch)->capture_default_str();
  all_common.attach(all);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cp->parsed()) {
      cp_common.emit({bench_control_plane(orch::parse_start_kind(start), orch::parse_scheme(cp_scheme), repeats,
                                          cp_common.settings())});
    } else if (dp->parsed()) {
      dp_opt.op = parse_op(op);
      dp_opt.mode = parse_mode(mode);
      dp_common.emit({bench_data_plane(dp_opt, orch::parse_scheme(dp_scheme), dp_common.settings())});
    } else if (check->parsed()) {
      const auto rep = requirement_check(load_results(check_in));
      print_report(rep);
      return rep.all_pass() ? 0 : 1;
    } else if (all->parsed()) {
      all_common.emit(run_all(all_common.settings(), matrix));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bench: %s\n", e.what());
    return 2;
  }
  return 0;
}
