#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "elastic/core/config.hpp"
#include "elastic/core/error.hpp"
#include "elastic/core/time.hpp"
#include "elastic/orchestrator/orchestrator.hpp"
#include "elastic/verbs/responder.hpp"
#include "elastic/verbs/verbs.hpp"

namespace elastic::bench {

using orch::Scheme;
using orch::StartKind;

enum class DataOp { read, write, send_recv };
enum class DataMode { sync, async };

inline std::string_view to_string(DataOp op) {
  switch (op) {
    case DataOp::read: return "read";
    case DataOp::write: return "write";
    case DataOp::send_recv: return "send-recv";
  }
  return "?";
}

inline DataOp parse_op(std::string_view s) {
  if (s == "read") return DataOp::read;
  if (s == "write") return DataOp::write;
  if (s == "send-recv") return DataOp::send_recv;
  throw Error(Errc::invalid_argument, "unknown op " + std::string(s));
}

inline std::string_view to_string(DataMode m) { return m == DataMode::sync ? "sync" : "async"; }

inline DataMode parse_mode(std::string_view s) {
  if (s == "sync") return DataMode::sync;
  if (s == "async") return DataMode::async;
  throw Error(Errc::invalid_argument, "unknown mode " + std::string(s));
}

/// Run-wide inputs shared by every scenario.
struct Settings {
  orch::OrchestratorConfig config;
  std::uint64_t seed = 1;
  std::uint64_t config_hash = Config{}.hash();

  static Settings from_config(const Config& cfg, std::uint64_t seed) {
    Settings s;
    s.config = orch::OrchestratorConfig::from_config(cfg);
    s.seed = seed;
    s.config_hash = cfg.hash();
    return s;
  }
};

struct ControlRun {
  orch::TimingBreakdown timing;
};

struct ThreadStats {
  std::size_t ops = 0;
  double throughput = 0;  // ops per virtual second
  double mean_latency_us = 0;
  double p99_latency_us = 0;
};

struct Aggregate {
  double task_launch_us = 0;
  double visible_control_plane_us = 0;
  double data_exchange_us = 0;
  double end_to_end_us = 0;
  std::size_t ops = 0;
  double throughput = 0;
  double mean_latency_us = 0;
  double p99_latency_us = 0;

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

/// One scenario cell. Control-plane cells carry one row per run, data-plane
/// cells one row per client thread.
struct BenchResult {
  std::string scenario;
  Scheme scheme = Scheme::swift;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::size_t repeats = 0;
  std::optional<StartKind> start;
  std::vector<ControlRun> runs;
  std::vector<ThreadStats> threads;
  double duration_s = 0;
  std::optional<double> wall_seconds;
  std::optional<std::size_t> delivered;  // fabric deliveries inside the window

  bool is_control() const { return start.has_value(); }
  std::size_t completed_ops() const {
    std::size_t n = 0;
    for (const auto& t : threads) n += t.ops;
    return n;
  }

  /// Recomputed from the raw rows every time.
  Aggregate aggregate() const {
    Aggregate a;
    if (!runs.empty()) {
      const double n = static_cast<double>(runs.size());
      for (const auto& r : runs) {
        a.task_launch_us += to_micros(r.timing.task_launch) / n;
        a.visible_control_plane_us += to_micros(r.timing.visible_control_plane) / n;
        a.data_exchange_us += to_micros(r.timing.data_exchange) / n;
        a.end_to_end_us += to_micros(r.timing.end_to_end) / n;
      }
    }
    for (const auto& t : threads) {
      a.ops += t.ops;
      a.throughput += t.throughput;
      a.p99_latency_us = std::max(a.p99_latency_us, t.p99_latency_us);
    }
    if (a.ops > 0)
      for (const auto& t : threads)
        a.mean_latency_us += t.mean_latency_us * static_cast<double>(t.ops) / static_cast<double>(a.ops);
    return a;
  }
};

namespace detail {

struct Testbed {
  std::shared_ptr<verbs::Fabric> fabric = std::make_shared<verbs::Fabric>();
  std::unique_ptr<verbs::Host> server;
  std::unique_ptr<verbs::Responder> responder;

  Testbed(const CostModel& costs, std::uint64_t seed) {
    server = std::make_unique<verbs::Host>(fabric, verbs::HostConfig{"server", 1, 1, {}, seed ^ 0x5eed}, costs);
    responder = std::make_unique<verbs::Responder>(*server);
  }

  ~Testbed() { responder.reset(); }
};

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Durations are whole nanoseconds, so three decimals in µs are exact.
inline std::string fmt_us(Duration d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", to_micros(d));
  return buf;
}

}  // namespace detail

/// Runs `repeats` requests of `kind`, each on a fresh orchestrator. WARM and
/// FORK runs first create the container with a cold start; only the measured
/// request is reported.
inline BenchResult bench_control_plane(StartKind kind, Scheme scheme, std::size_t repeats, const Settings& s) {
  if (repeats == 0) throw Error(Errc::invalid_argument, "repeats must be >= 1");
  BenchResult r;
  r.scenario = "control-plane/" + std::string(orch::to_string(kind));
  r.scheme = scheme;
  r.seed = s.seed;
  r.config_hash = s.config_hash;
  r.repeats = repeats;
  r.start = kind;
  for (std::size_t run = 0; run < repeats; ++run) {
    orch::OrchestratorConfig cfg = s.config;
    cfg.scheme = scheme;
    cfg.seed = s.seed + run;
    detail::Testbed bed(cfg.costs, cfg.seed);
    orch::Orchestrator o(bed.fabric, cfg);
    orch::RequestSpec spec{"bench", "noop", bed.responder->gid(), orch::LatencyClass::normal, {}};
    auto out = o.handle_request(spec);
    if (kind != StartKind::cold) {
      if (out.error) throw Error(Errc::invalid_argument, "priming cold start failed: " + *out.error);
      spec.latency = kind == StartKind::warm ? orch::LatencyClass::normal : orch::LatencyClass::fast;
      out = o.handle_request(spec);
    }
    if (out.error) throw Error(Errc::invalid_argument, r.scenario + " run failed: " + *out.error);
    if (out.kind != kind)
      throw Error(Errc::invalid_argument, r.scenario + " ran as " + std::string(orch::to_string(out.kind)));
    r.runs.push_back({out.timing});
  }
  return r;
}

struct DataPlaneOptions {
  DataOp op = DataOp::read;
  DataMode mode = DataMode::sync;
  std::size_t threads = 1;
  double duration_s = 1.0;
  std::size_t batch = 16;
  std::size_t message_bytes = 64;
  std::size_t pool = 8;
  bool wall_clock = false;
  bool log_deliveries = false;
};

/// Each client thread owns one QP to the server and issues requests for
/// `duration_s` virtual seconds: one outstanding request in sync mode, a
/// batch per post call in async mode. Only requests that complete inside the
/// window count.
inline BenchResult bench_data_plane(const DataPlaneOptions& opt, Scheme scheme, const Settings& s) {
  if (scheme == Scheme::baseline) throw Error(Errc::invalid_argument, "baseline scheme has no RDMA data plane");
  if (opt.threads == 0) throw Error(Errc::invalid_argument, "threads must be >= 1");
  if (opt.threads > opt.pool)
    throw Error(Errc::exhausted, std::to_string(opt.threads) + " threads exceed the pool of " + std::to_string(opt.pool));
  if (opt.duration_s <= 0) throw Error(Errc::invalid_argument, "duration must be > 0");
  if (opt.batch == 0 || opt.batch > 128) throw Error(Errc::invalid_argument, "batch must be in [1, 128]");

  BenchResult r;
  r.scenario = "data-plane/" + std::string(to_string(opt.op)) + "/" + std::string(to_string(opt.mode)) + "/t" +
               std::to_string(opt.threads);
  r.scheme = scheme;
  r.seed = s.seed;
  r.config_hash = s.config_hash;
  r.repeats = 1;
  r.duration_s = opt.duration_s;

  const CostModel& costs = s.config.costs;
  detail::Testbed bed(costs, s.seed);
  verbs::Host client(bed.fabric, verbs::HostConfig{"client", 0, 1, {}, s.seed}, costs);
  const auto path = scheme == Scheme::kernel ? verbs::DataPath::kernel_mediated : verbs::DataPath::user_space;
  bed.fabric->set_logging(opt.log_deliveries);
  Track setup;
  auto ctx = client.open_device(setup, "dev0", client.uncached_dispatch(), path);
  auto pd = ctx->alloc_pd(setup);

  struct Worker {
    std::shared_ptr<verbs::CompletionQueue> cq;
    std::shared_ptr<verbs::QueuePair> qp;
    std::shared_ptr<verbs::MemoryRegion> mr;
    verbs::ConnectInfo remote;
    std::vector<double> latencies;
  };
  std::vector<Worker> workers(opt.threads);
  const std::size_t span = opt.batch * opt.message_bytes;
  for (auto& w : workers) {
    w.cq = ctx->create_cq(setup, 4 * opt.batch);
    w.qp = pd->create_qp(setup, w.cq);
    w.mr = pd->reg_mr(setup, span, verbs::kAllAccess);
    w.remote = verbs::connect_to(setup, *w.qp, bed.responder->gid());
    if (w.remote.region_length < span) throw Error(Errc::invalid_argument, "server region too small for the batch");
  }

  const SimTime start = kEpoch;
  const SimTime end = start + micros(opt.duration_s * 1e6);
  const std::size_t per_call = opt.mode == DataMode::sync ? 1 : opt.batch;
  auto drive = [&](Worker& w) {
    Track t(start);
    std::vector<verbs::WorkRequest> wrs(per_call);
    std::uint64_t next_id = 0;
    while (t.now() < end) {
      const SimTime issued = t.now();
      for (std::size_t j = 0; j < per_call; ++j) {
        auto& wr = wrs[j];
        wr.wr_id = next_id++;
        wr.lkey = w.mr->lkey();
        wr.local_offset = j * opt.message_bytes;
        wr.length = opt.message_bytes;
        wr.remote_offset = j * opt.message_bytes;
        switch (opt.op) {
          case DataOp::read:
            wr.opcode = verbs::Opcode::rdma_read;
            wr.rkey = w.remote.rkey;
            break;
          case DataOp::write:
            wr.opcode = verbs::Opcode::rdma_write;
            wr.rkey = w.remote.rkey;
            break;
          case DataOp::send_recv:
            wr.opcode = verbs::Opcode::send;
            wr.rkey = 0;
            wr.remote_offset = 0;
            break;
        }
      }
      w.qp->post_send(t, wrs);
      for (const auto& wc : w.cq->wait(t, per_call)) {
        if (wc.status != verbs::WcStatus::ok)
          throw Error(Errc::invalid_argument, "completion status " + std::string(verbs::to_string(wc.status)));
        if (wc.ready_at <= end) w.latencies.push_back(to_micros(wc.ready_at - issued));
      }
    }
  };

  const auto wall_start = std::chrono::steady_clock::now();
  if (opt.wall_clock) {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers.size());
    for (std::size_t i = 0; i < workers.size(); ++i)
      pool.emplace_back([&, i] {
        try {
          drive(workers[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  } else {
    for (auto& w : workers) drive(w);
  }

  if (opt.log_deliveries) {
    std::size_t n = 0;
    for (const auto& rec : bed.fabric->log())
      if (rec.src == ctx->gid() && rec.status == verbs::WcStatus::ok && rec.at <= end) ++n;
    r.delivered = n;
  }
  for (auto& w : workers) {
    ThreadStats ts;
    ts.ops = w.latencies.size();
    ts.throughput = static_cast<double>(ts.ops) / opt.duration_s;
    if (ts.ops > 0) {
      ts.mean_latency_us = std::accumulate(w.latencies.begin(), w.latencies.end(), 0.0) / static_cast<double>(ts.ops);
      ts.p99_latency_us = detail::percentile(w.latencies, 0.99);
    }
    r.threads.push_back(ts);
    w.qp->destroy();
  }
  return r;
}

struct RuleResult {
  Scheme scheme = Scheme::swift;
  std::string rule;
  double value = 0;
  double threshold = 0;
  bool pass = false;
};

struct RequirementReport {
  std::vector<RuleResult> rules;
  bool all_pass() const {
    return std::all_of(rules.begin(), rules.end(), [](const RuleResult& r) { return r.pass; });
  }
  bool passes(Scheme s) const {
    return std::all_of(rules.begin(), rules.end(), [s](const RuleResult& r) { return r.scheme != s || r.pass; });
  }
};

/// Latency rules for elastic computing: warm and cold starts must keep the
/// visible control plane under 5% of end-to-end, fork starts under 100µs.
/// Checks every scheme (other than baseline) that appears among the
/// control-plane results; each needs all three start kinds.
inline RequirementReport requirement_check(const std::vector<BenchResult>& results) {
  std::map<Scheme, std::map<StartKind, Aggregate>> by;
  for (const auto& r : results)
    if (r.is_control() && r.scheme != Scheme::baseline) by[r.scheme][*r.start] = r.aggregate();
  if (by.empty()) throw Error(Errc::invalid_argument, "no control-plane results to check");
  RequirementReport rep;
  for (const auto& [scheme, kinds] : by) {
    for (StartKind k : {StartKind::cold, StartKind::warm, StartKind::fork})
      if (kinds.count(k) == 0)
        throw Error(Errc::invalid_argument, "missing " + std::string(orch::to_string(k)) + " results for scheme " +
                                                std::string(orch::to_string(scheme)));
    auto share = [](const Aggregate& a) {
      return a.end_to_end_us > 0 ? a.visible_control_plane_us / a.end_to_end_us : 0.0;
    };
    const double cold = share(kinds.at(StartKind::cold));
    const double warm = share(kinds.at(StartKind::warm));
    const double fork = kinds.at(StartKind::fork).visible_control_plane_us;
    rep.rules.push_back({scheme, "cold visible control plane share", cold, 0.05, cold < 0.05});
    rep.rules.push_back({scheme, "warm visible control plane share", warm, 0.05, warm < 0.05});
    rep.rules.push_back({scheme, "fork visible control plane us", fork, 100.0, fork < 100.0});
  }
  return rep;
}

// ---- export -------------------------------------------------------------

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "scenario",          "scheme",          "seed",         "config_hash",   "repeats",  "duration_s",
      "row",               "index",           "task_launch_us", "visible_control_plane_us", "data_exchange_us",
      "end_to_end_us",     "ops",             "throughput_ops_s", "mean_latency_us", "p99_latency_us"};
  return cols;
}

inline std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Raw rows then one aggregate row per result, fixed column order.
inline std::string to_csv(const std::vector<BenchResult>& results) {
  using detail::fmt;
  using detail::fmt_us;
  std::string out;
  for (std::size_t i = 0; i < csv_columns().size(); ++i) out += (i ? "," : "") + csv_columns()[i];
  out += "\n";
  for (const auto& r : results) {
    const std::string head = r.scenario + "," + std::string(orch::to_string(r.scheme)) + "," + std::to_string(r.seed) +
                             "," + hex64(r.config_hash) + "," + std::to_string(r.repeats) + "," + fmt(r.duration_s);
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
      const auto& t = r.runs[i].timing;
      out += head + ",run," + std::to_string(i) + "," + fmt_us(t.task_launch) + "," +
             fmt_us(t.visible_control_plane) + "," + fmt_us(t.data_exchange) + "," + fmt_us(t.end_to_end) + ",,,,\n";
    }
    for (std::size_t i = 0; i < r.threads.size(); ++i) {
      const auto& t = r.threads[i];
      out += head + ",thread," + std::to_string(i) + ",,,,," + std::to_string(t.ops) + "," + fmt(t.throughput) + "," +
             fmt(t.mean_latency_us) + "," + fmt(t.p99_latency_us) + "\n";
    }
    const Aggregate a = r.aggregate();
    out += head + ",aggregate,,";
    if (r.is_control())
      out += fmt(a.task_launch_us) + "," + fmt(a.visible_control_plane_us) + "," + fmt(a.data_exchange_us) + "," +
             fmt(a.end_to_end_us) + ",,,,\n";
    else
      out += ",,,," + std::to_string(a.ops) + "," + fmt(a.throughput) + "," + fmt(a.mean_latency_us) + "," +
             fmt(a.p99_latency_us) + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const std::vector<BenchResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json j;
    j["scenario"] = r.scenario;
    j["scheme"] = orch::to_string(r.scheme);
    j["seed"] = r.seed;
    j["config_hash"] = hex64(r.config_hash);
    j["repeats"] = r.repeats;
    j["duration_s"] = r.duration_s;
    if (r.start) j["start"] = orch::to_string(*r.start);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& run : r.runs) {
      const auto& t = run.timing;
      rows.push_back({{"task_launch_ns", t.task_launch.count()},
                      {"visible_control_plane_ns", t.visible_control_plane.count()},
                      {"data_exchange_ns", t.data_exchange.count()},
                      {"end_to_end_ns", t.end_to_end.count()}});
    }
    for (const auto& t : r.threads)
      rows.push_back({{"ops", t.ops},
                      {"throughput_ops_s", t.throughput},
                      {"mean_latency_us", t.mean_latency_us},
                      {"p99_latency_us", t.p99_latency_us}});
    j["rows"] = std::move(rows);
    const Aggregate a = r.aggregate();
    j["aggregate"] = {{"task_launch_us", a.task_launch_us},
                      {"visible_control_plane_us", a.visible_control_plane_us},
                      {"data_exchange_us", a.data_exchange_us},
                      {"end_to_end_us", a.end_to_end_us},
                      {"ops", a.ops},
                      {"throughput_ops_s", a.throughput},
                      {"mean_latency_us", a.mean_latency_us},
                      {"p99_latency_us", a.p99_latency_us}};
    arr.push_back(std::move(j));
  }
  return nlohmann::json{{"results", std::move(arr)}};
}

inline std::vector<BenchResult> from_json(const nlohmann::json& doc) {
  std::vector<BenchResult> out;
  for (const auto& j : doc.at("results")) {
    BenchResult r;
    r.scenario = j.at("scenario").get<std::string>();
    r.scheme = orch::parse_scheme(j.at("scheme").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    r.repeats = j.at("repeats").get<std::size_t>();
    r.duration_s = j.at("duration_s").get<double>();
    if (j.contains("start")) r.start = orch::parse_start_kind(j.at("start").get<std::string>());
    for (const auto& row : j.at("rows")) {
      if (row.contains("end_to_end_ns")) {
        orch::TimingBreakdown t;
        t.task_launch = Duration(row.at("task_launch_ns").get<std::int64_t>());
        t.visible_control_plane = Duration(row.at("visible_control_plane_ns").get<std::int64_t>());
        t.data_exchange = Duration(row.at("data_exchange_ns").get<std::int64_t>());
        t.end_to_end = Duration(row.at("end_to_end_ns").get<std::int64_t>());
        r.runs.push_back({t});
      } else {
        r.threads.push_back({row.at("ops").get<std::size_t>(), row.at("throughput_ops_s").get<double>(),
                             row.at("mean_latency_us").get<double>(), row.at("p99_latency_us").get<double>()});
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

/// Parses what to_csv wrote. Aggregate rows are checked against the raw
/// rows rather than trusted.
inline std::vector<BenchResult> from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != csv_columns())
    throw Error(Errc::invalid_argument, "unexpected csv header");
  std::vector<BenchResult> out;
  bool closed = true;
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < csv_columns().size(); ++i) col[csv_columns()[i]] = i;
  auto us = [](const std::string& v) { return micros(std::stod(v)); };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != csv_columns().size()) throw Error(Errc::invalid_argument, "bad csv row: " + line);
    const std::string& row = f[col["row"]];
    const Scheme scheme = orch::parse_scheme(f[col["scheme"]]);
    if (closed || out.back().scenario != f[col["scenario"]] || out.back().scheme != scheme) {
      closed = false;
      BenchResult r;
      r.scenario = f[col["scenario"]];
      r.scheme = scheme;
      r.seed = std::stoull(f[col["seed"]]);
      r.config_hash = std::stoull(f[col["config_hash"]], nullptr, 16);
      r.repeats = std::stoull(f[col["repeats"]]);
      r.duration_s = std::stod(f[col["duration_s"]]);
      if (r.scenario.rfind("control-plane/", 0) == 0) r.start = orch::parse_start_kind(r.scenario.substr(14));
      out.push_back(std::move(r));
    }
    BenchResult& r = out.back();
    if (row == "run") {
      orch::TimingBreakdown t;
      t.task_launch = us(f[col["task_launch_us"]]);
      t.visible_control_plane = us(f[col["visible_control_plane_us"]]);
      t.data_exchange = us(f[col["data_exchange_us"]]);
      t.end_to_end = us(f[col["end_to_end_us"]]);
      r.runs.push_back({t});
    } else if (row == "thread") {
      r.threads.push_back({std::stoull(f[col["ops"]]), std::stod(f[col["throughput_ops_s"]]),
                           std::stod(f[col["mean_latency_us"]]), std::stod(f[col["p99_latency_us"]])});
    } else if (row == "aggregate") {
      closed = true;
      const std::string expect = to_csv({r});
      const std::string got_tail = line.substr(line.find(",aggregate,"));
      if (expect.find(got_tail + "\n") == std::string::npos)
        throw Error(Errc::invalid_argument, "aggregate row disagrees with raw rows for " + r.scenario);
    } else {
      throw Error(Errc::invalid_argument, "unknown row kind " + row);
    }
  }
  return out;
}

inline void export_results(const std::vector<BenchResult>& results, std::string_view format, const std::string& path) {
  if (results.empty()) throw Error(Errc::invalid_argument, "nothing to export");
  std::string text;
  if (format == "csv")
    text = to_csv(results);
  else if (format == "json")
    text = to_json(results).dump(2) + "\n";
  else
    throw Error(Errc::invalid_argument, "unknown format " + std::string(format));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  out << text;
  if (!out) throw Error(Errc::io, "write failed for " + path);
}

inline std::vector<BenchResult> load_results(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return from_json(nlohmann::json::parse(text));
  return from_csv(text);
}

// ---- full matrix --------------------------------------------------------

struct MatrixOptions {
  std::size_t repeats = 10;
  double duration_s = 1.0;
  std::size_t batch = 16;
  std::vector<std::size_t> threads{1, 2, 4, 8};
};

/// Every control-plane cell (cold/warm/fork x all schemes) followed by every
/// data-plane cell (op x mode x threads x RDMA schemes).
inline std::vector<BenchResult> run_all(const Settings& s, const MatrixOptions& m = {}) {
  std::vector<BenchResult> out;
  for (Scheme scheme : {Scheme::baseline, Scheme::swift, Scheme::uncached, Scheme::kernel})
    for (StartKind kind : {StartKind::cold, StartKind::warm, StartKind::fork})
      out.push_back(bench_control_plane(kind, scheme, m.repeats, s));
  for (DataOp op : {DataOp::read, DataOp::write, DataOp::send_recv})
    for (DataMode mode : {DataMode::sync, DataMode::async})
      for (std::size_t t : m.threads)
        for (Scheme scheme : {Scheme::swift, Scheme::uncached, Scheme::kernel}) {
          DataPlaneOptions d;
          d.op = op;
          d.mode = mode;
          d.threads = t;
          d.duration_s = m.duration_s;
          d.batch = m.batch;
          out.push_back(bench_data_plane(d, scheme, s));
        }
  return out;
}

}  // namespace elastic::bench
