#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cluster.hpp"

using namespace elastic;
using namespace elastic::orch;
using elastic::testing::Cluster;
using elastic::testing::scheme_config;

namespace {

// Scan all rows, keep the free ones, rank matches before the rest, then by index.
std::vector<std::size_t> reference_select(const std::vector<Assignment>& rows, const Gid& dest, std::size_t count) {
  std::vector<std::pair<int, std::size_t>> ranked;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (!rows[i].pid) ranked.push_back({rows[i].destination == dest ? 0 : 1, i});
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(count, ranked.size()); ++i) out.push_back(ranked[i].second);
  return out;
}

const Gid G = Gid::for_device(1, 0);
const Gid H = Gid::for_device(2, 0);

double us(Duration d) { return to_micros(d); }

std::vector<nlohmann::json> parse_log(const Orchestrator& o) {
  std::vector<nlohmann::json> out;
  for (const auto& line : o.event_log()) out.push_back(nlohmann::json::parse(line));
  return out;
}

Handler busy_for(Duration d) {
  return [d](const RequestSpec&, FunctionContext& ctx) {
    ctx.track->charge("work", d);
    return std::string("done");
  };
}

}  // namespace

TEST(Selection, SpecExamples) {
  std::vector<Assignment> t{{std::nullopt, G}, {std::nullopt, H}, {std::nullopt, G}};
  EXPECT_EQ(select_qps(t, G, 2), (std::vector<std::size_t>{0, 2}));
  std::vector<Assignment> empty(4);
  EXPECT_EQ(select_qps(empty, G, 1), (std::vector<std::size_t>{0}));
  std::vector<Assignment> full{{1, G}, {2, H}};
  EXPECT_TRUE(select_qps(full, G, 1).empty());
}

TEST(Selection, MatchesReferenceOnRandomTables) {
  std::mt19937_64 rng(7);
  const Gid dests[] = {G, H, Gid::for_device(3, 0)};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Assignment> rows(rng() % 24);
    for (auto& r : rows) {
      if (rng() % 2) r.pid = static_cast<int>(100 + rng() % 50);
      const auto d = rng() % 4;
      if (d < 3) r.destination = dests[d];
    }
    const Gid want = dests[rng() % 3];
    const std::size_t count = 1 + rng() % 6;
    ASSERT_EQ(select_qps(rows, want, count), reference_select(rows, want, count)) << trial;
  }
}

TEST(Tables, WriterOwnership) {
  AssignmentTable a(101);
  QpTable q(101);
  a.append(101);
  try {
    a.assign(102, 0, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ownership);
  }
  EXPECT_THROW(q.clear(7), Error);
  OrchestratorTable o;
  EXPECT_THROW(o.add(101, {"c1", "u", "f", {}, {}}), Error);
  o.add(OrchestratorTable::kScheduler, {"c1", "u", "f", {}, {}});
  EXPECT_THROW(o.add(OrchestratorTable::kScheduler, {"c2", "u", "f", {}, {}}), Error);
}

TEST(Tables, ReleaseKeepsDestinationAndIsIdempotent) {
  AssignmentTable a(1);
  for (int i = 0; i < 3; ++i) a.append(1);
  a.set_destination(1, 1, G);
  a.assign(1, 1, 50);
  a.assign(1, 2, 50);
  EXPECT_EQ(a.release(1, 50), 2u);
  const std::vector<Assignment> once(a.entries().begin(), a.entries().end());
  EXPECT_EQ(a.release(1, 50), 0u);
  EXPECT_EQ(std::vector<Assignment>(a.entries().begin(), a.entries().end()), once);
  EXPECT_EQ(a.at(1).destination, G);
  EXPECT_EQ(a.release(1, 999), 0u);
  EXPECT_EQ(select_qps(a.entries(), G, 1), (std::vector<std::size_t>{1}));
}

TEST(Orchestrator, StartKindPolicy) {
  Cluster c;
  auto first = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  EXPECT_EQ(first.kind, StartKind::cold);
  ASSERT_FALSE(first.error) << *first.error;
  auto second = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  EXPECT_EQ(second.kind, StartKind::warm);
  EXPECT_EQ(second.container, first.container);
  EXPECT_NE(second.pid, first.pid);
  auto third = c.orch->handle_request(c.request("A", "F", LatencyClass::fast));
  EXPECT_EQ(third.kind, StartKind::fork);
  EXPECT_EQ(third.container, first.container);
  auto other = c.orch->handle_request(c.request("B", "F", LatencyClass::normal));
  EXPECT_EQ(other.kind, StartKind::cold);
  EXPECT_NE(other.container, first.container);
  auto fallback = c.orch->handle_request(c.request("C", "F", LatencyClass::fast));
  EXPECT_EQ(fallback.kind, StartKind::cold);
  EXPECT_TRUE(fallback.fell_back);
  EXPECT_EQ(c.orch->table().get(first.container).init_pids.size(), 2u);
  EXPECT_TRUE(c.orch->check_invariants().empty());
}

TEST(Orchestrator, InitTablesAfterBoot) {
  Cluster c;
  auto o = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  c.orch->run();
  const auto& init = c.orch->init(o.init_pid);
  ASSERT_EQ(init.assignments.size(), 8u);
  ASSERT_EQ(init.qps.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(init.assignments.at(i).destination, c.gid());
    EXPECT_FALSE(init.assignments.at(i).pid);
    EXPECT_EQ(init.qps.at(i)->state(), verbs::QpState::rts);
  }
  EXPECT_EQ(c.orch->table().get(o.container).connections.size(), 8u);
  EXPECT_EQ(c.responders[0]->connection_count(), 8u);
}

TEST(Orchestrator, TimingConservation) {
  for (Scheme s : {Scheme::swift, Scheme::uncached, Scheme::kernel, Scheme::baseline}) {
    Cluster c(scheme_config(s));
    std::vector<RequestOutcome> outs;
    outs.push_back(c.orch->handle_request(c.request("A", "F", LatencyClass::normal)));
    outs.push_back(c.orch->handle_request(c.request("A", "F", LatencyClass::normal)));
    outs.push_back(c.orch->handle_request(c.request("A", "F", LatencyClass::fast)));
    for (const auto& o : outs) {
      ASSERT_FALSE(o.error) << *o.error;
      const auto& t = o.timing;
      EXPECT_EQ(t.end_to_end, t.task_launch + t.visible_control_plane + t.data_exchange);
      if (o.kind != StartKind::fork) {
        EXPECT_EQ(t.visible_control_plane, std::max(Duration::zero(), t.rdma_setup - t.runtime_init));
      }
    }
  }
}

TEST(Orchestrator, ScenarioTimings) {
  auto run = [](Scheme s, StartKind kind) {
    Cluster c(scheme_config(s));
    auto o = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
    if (kind != StartKind::cold)
      o = c.orch->handle_request(c.request("A", "F", kind == StartKind::warm ? LatencyClass::normal : LatencyClass::fast));
    EXPECT_EQ(o.kind, kind);
    return us(o.timing.end_to_end);
  };
  const double cold_base = run(Scheme::baseline, StartKind::cold);
  EXPECT_NEAR(cold_base, 318000, 1000);
  const double warm_base = run(Scheme::baseline, StartKind::warm);
  EXPECT_NEAR(warm_base, 89000, 500);
  const double fork_base = run(Scheme::baseline, StartKind::fork);
  EXPECT_NEAR(fork_base, 1383.86, 1e-6);

  const double warm_swift = run(Scheme::swift, StartKind::warm);
  EXPECT_NEAR(warm_swift / warm_base - 1, 0.022, 0.008);
  const double warm_uncached = run(Scheme::uncached, StartKind::warm);
  EXPECT_NEAR(warm_uncached / warm_base - 1, 0.400, 0.01);
  const double fork_swift = run(Scheme::swift, StartKind::fork);
  const double fork_overhead = fork_swift / fork_base - 1;
  EXPECT_GE(fork_overhead, 0.05);
  EXPECT_LE(fork_overhead, 0.08);
  const double fork_kernel = run(Scheme::kernel, StartKind::fork);
  EXPECT_GT(fork_swift, fork_kernel);
  EXPECT_NEAR(fork_swift / fork_kernel - 1, 0.051, 0.01);

  Cluster c(scheme_config(Scheme::swift));
  const auto cold = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  EXPECT_NEAR(us(cold.timing.task_launch), 318000, 1000);
  EXPECT_LE(us(cold.timing.visible_control_plane) / us(cold.timing.end_to_end), 0.02);
}

TEST(Orchestrator, PipeliningIsMaxNotSum) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    OrchestratorConfig cfg;
    cfg.scheme = trial % 2 ? Scheme::swift : Scheme::uncached;
    cfg.costs.runtime_init = micros(static_cast<double>(rng() % 60000));
    const double scale = 0.2 + static_cast<double>(rng() % 300) / 100.0;
    for (auto& [_, cost] : cfg.costs.subroutines) {
      cost.user = Duration(static_cast<std::int64_t>(static_cast<double>(cost.user.count()) * scale));
      cost.kernel = Duration(static_cast<std::int64_t>(static_cast<double>(cost.kernel.count()) * scale));
    }
    Cluster c(cfg);
    const auto report = c.orch->init_process("box", c.gid(), SimTime{} + micros(1000));
    const Duration a = c.ledger.total_for(report.runtime_track);
    const Duration b = c.ledger.total_for(report.rdma_track);
    EXPECT_EQ(a, report.runtime);
    EXPECT_EQ(b, report.rdma);
    EXPECT_EQ(report.elapsed, std::max(a, b)) << trial;
    if (a > Duration::zero() && b > Duration::zero()) {
      EXPECT_LT(report.elapsed, a + b);
    }

    auto o = c.orch->handle_request(c.request("U", "F", LatencyClass::normal));
    ASSERT_FALSE(o.error) << *o.error;
    const Duration ra = c.ledger.total_for(o.runtime_track);
    const Duration rb = c.ledger.total_for(o.rdma_track);
    EXPECT_EQ(o.timing.visible_control_plane, std::max(Duration::zero(), rb - ra)) << trial;
  }
}

TEST(Orchestrator, HiddenControlPlane) {
  OrchestratorConfig cfg;
  cfg.costs.runtime_init = micros(50000);
  Cluster c(cfg);
  const auto report = c.orch->init_process("box", c.gid(), SimTime{});
  EXPECT_EQ(report.elapsed, micros(50000));
  auto o = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  EXPECT_EQ(o.timing.visible_control_plane, Duration::zero());

  OrchestratorConfig zero;
  zero.costs.runtime_init = Duration::zero();
  Cluster z(zero);
  const auto r = z.orch->init_process("box", z.gid(), SimTime{});
  EXPECT_EQ(r.elapsed, r.rdma);
}

TEST(Orchestrator, ConnectedDestinationSkipsHandshake) {
  Cluster c;
  c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  auto fork = c.orch->handle_request(c.request("A", "F", LatencyClass::fast));
  ASSERT_EQ(fork.kind, StartKind::fork);
  EXPECT_EQ(c.ledger.count_matching(fork.control_track, "modify_qp"), 0u);
  EXPECT_EQ(c.ledger.count_matching(fork.control_track, "handshake"), 0u);
  EXPECT_EQ(c.ledger.total_for(fork.control_track), Duration::zero());

  auto other = c.orch->handle_request(c.request("A", "F", LatencyClass::fast, 1));
  EXPECT_GT(c.ledger.count_matching(other.control_track, "handshake"), 0u);
  EXPECT_GT(other.timing.visible_control_plane, Duration::zero());
  c.orch->run();
  const auto& init = c.orch->init(other.init_pid);
  EXPECT_EQ(init.assignments.at(other.qp_ids[0]).destination, c.gid(1));

  // A released row is reused for the same destination without reconnecting.
  auto again = c.orch->handle_request(c.request("A", "F", LatencyClass::fast, 1));
  EXPECT_EQ(again.qp_ids, other.qp_ids);
  EXPECT_EQ(c.ledger.count_matching(again.control_track, "handshake"), 0u);
}

TEST(Orchestrator, BurstWithoutExhaustion) {
  Cluster c;
  c.orch->register_handler("F", busy_for(micros(50000)));
  const auto cold = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  std::vector<std::uint64_t> ids;
  for (int i = 0; i < 20; ++i) ids.push_back(c.orch->submit(c.request("A", "F", LatencyClass::fast), cold.completed));
  c.orch->run();
  for (auto id : ids) {
    const auto o = c.orch->outcome(id);
    ASSERT_FALSE(o.error) << *o.error;
    EXPECT_EQ(o.kind, StartKind::fork);
    EXPECT_FALSE(o.waited_for_qp);
  }

  // Replay the log: per-INIT free-row count must never go negative and no
  // request may be parked for lack of a QP.
  std::map<std::string, long> free_rows;
  long peak_children = 0, children = 0;
  for (const auto& rec : parse_log(*c.orch)) {
    const std::string ev = rec["event"], actor = rec["actor"];
    ASSERT_NE(ev, "qp_exhausted");
    if (ev == "init_ready") free_rows[actor] = rec["fields"]["qps"].get<long>();
    if (ev == "qp_assign") free_rows[actor] -= static_cast<long>(rec["fields"]["qp_ids"].size());
    if (ev == "qp_release") free_rows[actor] += rec["fields"]["count"].get<long>();
    if (ev == "replenish_done") free_rows[actor] += rec["fields"]["count"].get<long>();
    if (ev == "fork") peak_children = std::max(peak_children, ++children);
    if (ev == "exit") --children;
    ASSERT_GE(free_rows[actor], 0);
  }
  EXPECT_EQ(peak_children, 20);
  EXPECT_GE(c.orch->init(cold.init_pid).qps.size(), 20u);
  EXPECT_TRUE(c.orch->check_invariants().empty());
}

TEST(Orchestrator, ExhaustionQueuesUntilRelease) {
  OrchestratorConfig cfg;
  cfg.max_qps = 8;
  Cluster c(cfg);
  c.orch->register_handler("F", busy_for(micros(100000)));
  const auto cold = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  std::vector<std::uint64_t> ids;
  for (int i = 0; i < 10; ++i) ids.push_back(c.orch->submit(c.request("A", "F", LatencyClass::fast), cold.completed));
  c.orch->run();
  std::size_t waited = 0;
  for (auto id : ids) {
    const auto o = c.orch->outcome(id);
    ASSERT_FALSE(o.error) << *o.error;
    if (o.waited_for_qp) {
      ++waited;
      EXPECT_GT(o.timing.exhaustion_wait, Duration::zero());
      EXPECT_EQ(o.timing.end_to_end, o.timing.task_launch + o.timing.visible_control_plane + o.timing.data_exchange);
    }
  }
  EXPECT_EQ(waited, 2u);
  EXPECT_EQ(c.orch->init(cold.init_pid).qps.size(), 8u);

  Track t;
  auto assign_all = [&] {
    return c.orch->assign_qps(cold.init_pid, cold.init_pid, c.gid(), 8, t);
  };
  EXPECT_EQ(assign_all().size(), 8u);
  try {
    c.orch->assign_qps(cold.init_pid, cold.init_pid, c.gid(), 1, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::exhausted);
  }
}

TEST(Orchestrator, RandomScheduleInvariants) {
  std::mt19937_64 rng(99);
  OrchestratorConfig cfg;
  cfg.max_qps = 12;
  Cluster c(cfg, 3);
  c.orch->register_handler("F", busy_for(micros(3000)));
  c.orch->register_handler("G", busy_for(micros(800)));
  const char* users[] = {"u1", "u2", "u3"};
  const char* fns[] = {"F", "G"};
  SimTime at{};
  for (int i = 0; i < 200; ++i) {
    at += micros(static_cast<double>(rng() % 2000));
    auto spec = c.request(users[rng() % 3], fns[rng() % 2], rng() % 4 ? LatencyClass::fast : LatencyClass::normal,
                          rng() % 3);
    c.orch->submit(spec, at);
    if (i % 10 == 9) {
      c.orch->run();
      ASSERT_EQ(c.orch->check_invariants(), std::vector<std::string>{});
    }
  }
  c.orch->run();
  std::map<std::string, std::set<std::string>> users_by_container;
  for (const auto& o : c.orch->outcomes()) {
    if (o.error) continue;
    users_by_container[o.container].insert(o.spec.user);
    EXPECT_EQ(o.timing.end_to_end, o.timing.task_launch + o.timing.visible_control_plane + o.timing.data_exchange);
  }
  for (const auto& [id, users] : users_by_container) EXPECT_EQ(users.size(), 1u) << id;
}

TEST(Orchestrator, TerminateContainer) {
  Cluster c;
  auto o = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  c.orch->handle_request(c.request("A", "F", LatencyClass::fast, 1));
  c.orch->run();
  ASSERT_GT(c.orch->live_endpoints(o.container), 0u);
  const std::size_t qps = c.orch->init(o.init_pid).qps.size();
  const auto before = c.orch->event_log().size();
  c.orch->terminate_container(o.container);
  std::size_t closes = 0;
  for (std::size_t i = before; i < c.orch->event_log().size(); ++i)
    if (nlohmann::json::parse(c.orch->event_log()[i])["event"] == "qp_close") ++closes;
  EXPECT_EQ(closes, qps);
  EXPECT_EQ(c.orch->live_endpoints(o.container), 0u);
  EXPECT_FALSE(c.orch->table().contains(o.container));
  EXPECT_THROW(c.orch->init(o.init_pid), Error);
  EXPECT_FALSE(c.orch->processes().alive(o.init_pid));
  try {
    c.orch->terminate_container(o.container);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_container);
  }
  auto next = c.orch->handle_request(c.request("A", "F", LatencyClass::fast));
  EXPECT_EQ(next.kind, StartKind::cold);
  EXPECT_TRUE(c.orch->check_invariants().empty());
}

TEST(Orchestrator, TerminateEightQps) {
  Cluster c;
  auto o = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  c.orch->run();
  const auto before = c.orch->event_log().size();
  c.orch->terminate_container(o.container);
  std::size_t closes = 0;
  for (std::size_t i = before; i < c.orch->event_log().size(); ++i)
    if (nlohmann::json::parse(c.orch->event_log()[i])["event"] == "qp_close") ++closes;
  EXPECT_EQ(closes, 8u);
  EXPECT_EQ(c.orch->live_endpoints(o.container), 0u);
  EXPECT_EQ(c.responders[0]->connection_count(), 0u);
}

TEST(Orchestrator, TerminateAbortsInFlightChildren) {
  Cluster c;
  c.orch->register_handler("F", busy_for(micros(100000)));
  auto cold = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  const auto id = c.orch->submit(c.request("A", "F", LatencyClass::fast), cold.completed);
  c.orch->run_until(cold.completed + micros(50000));
  ASSERT_TRUE(c.orch->processes().alive(c.orch->outcome(id).pid));
  c.orch->terminate_container(cold.container);
  c.orch->run();
  const auto o = c.orch->outcome(id);
  EXPECT_TRUE(o.aborted);
  EXPECT_FALSE(c.orch->processes().alive(o.pid));
}

TEST(Orchestrator, Handlers) {
  Cluster c;
  c.orch->register_handler("echo", handlers::echo);
  auto o = c.orch->handle_request(c.request("A", "echo", LatencyClass::normal));
  ASSERT_FALSE(o.error) << *o.error;
  EXPECT_EQ(o.result, "sent 64");
  auto got = c.responders[0]->received();
  ASSERT_EQ(got.size(), 1u);
  ASSERT_EQ(got[0].size(), 64u);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(got[0][i], static_cast<std::byte>(i));

  auto f = c.orch->handle_request(c.request("A", "echo", LatencyClass::fast));
  ASSERT_FALSE(f.error) << *f.error;
  EXPECT_EQ(c.responders[0]->received().size(), 2u);

  c.responders[0]->region().write(0, std::vector<std::byte>{std::byte{0xab}, std::byte{0x01}});
  c.orch->register_handler("kv", handlers::kv_read);
  auto spec = c.request("A", "kv", LatencyClass::normal);
  spec.payload.resize(2);
  auto kv = c.orch->handle_request(spec);
  ASSERT_FALSE(kv.error) << *kv.error;
  EXPECT_EQ(kv.result, "ab01");

  std::size_t seen_id = 999;
  c.orch->register_handler("probe", [&](const RequestSpec&, FunctionContext& ctx) {
    seen_id = ctx.qp_ids.at(0);
    Track& t = *ctx.track;
    auto extra = ctx.pd->reg_mr(t, 4096, verbs::kAllAccess);
    return extra->registered() ? std::string("mr") : std::string("no");
  });
  c.orch->handle_request(c.request("P", "probe", LatencyClass::normal));
  auto p = c.orch->handle_request(c.request("P", "probe", LatencyClass::fast));
  ASSERT_FALSE(p.error) << *p.error;
  EXPECT_EQ(p.result, "mr");
  EXPECT_EQ(seen_id, p.qp_ids.at(0));

  c.orch->register_handler("boom", [](const RequestSpec&, FunctionContext&) -> std::string {
    throw std::runtime_error("bad input");
  });
  auto b = c.orch->handle_request(c.request("A", "boom", LatencyClass::normal));
  ASSERT_TRUE(b.error);
  EXPECT_NE(b.error->find("bad input"), std::string::npos);
  auto b2 = c.orch->handle_request(c.request("A", "boom", LatencyClass::fast));
  EXPECT_EQ(b2.kind, StartKind::fork);
  EXPECT_TRUE(b2.error);
}

TEST(Orchestrator, InitFailureRetriesUncached) {
  Cluster c;
  c.orch->host().registry().inject_failure("kernel_alloc_pd");
  auto o = c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  ASSERT_FALSE(o.error) << *o.error;
  EXPECT_EQ(c.orch->cache_manager().invalidation_count(), 1u);
  const auto cached_rdma = micros(3340);
  EXPECT_GT(o.timing.rdma_setup, cached_rdma);
  bool failed = false;
  for (const auto& rec : parse_log(*c.orch)) failed |= rec["event"] == "rdma_setup_failed";
  EXPECT_TRUE(failed);

  c.orch->host().registry().inject_failure("kernel_alloc_pd", 2);
  auto lost = c.orch->handle_request(c.request("B", "F", LatencyClass::normal));
  ASSERT_TRUE(lost.error);
  EXPECT_FALSE(c.orch->table().find("B", "F"));
  auto retry = c.orch->handle_request(c.request("B", "F", LatencyClass::normal));
  EXPECT_EQ(retry.kind, StartKind::cold);
  EXPECT_FALSE(retry.error);
}

TEST(Orchestrator, EventLogIsJsonLines) {
  Cluster c;
  c.orch->handle_request(c.request("A", "F", LatencyClass::normal));
  c.orch->handle_request(c.request("A", "F", LatencyClass::fast));
  const auto recs = parse_log(*c.orch);
  ASSERT_FALSE(recs.empty());
  for (const auto& r : recs) {
    EXPECT_TRUE(r.contains("t_us"));
    EXPECT_TRUE(r.contains("actor"));
    EXPECT_TRUE(r.contains("event"));
  }
  const std::string text = c.orch->event_log_text();
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), recs.size());
}

TEST(Orchestrator, ConfigParsing) {
  auto with_defaults = [](const std::string& text) {
    Config c = Config::load(ELASTIC_CONFIG_DIR "/default.conf");
    c.merge(Config::parse(text));
    return c;
  };
  auto cfg = with_defaults("qp.initial = 4\nqp.replenish_threshold = 2\nqp.replenish_batch = 3\nqp.max = 16\n"
                           "region_bytes = 4096\nhandler.F = echo\nreprofile_period_us = 1000\n");
  auto oc = OrchestratorConfig::from_config(cfg);
  EXPECT_EQ(oc.initial_qps, 4u);
  EXPECT_EQ(oc.replenish_threshold, 2u);
  EXPECT_EQ(oc.replenish_batch, 3u);
  EXPECT_EQ(oc.max_qps, 16u);
  EXPECT_EQ(oc.region_bytes, 4096u);
  EXPECT_EQ(oc.handlers.at("F"), "echo");
  EXPECT_EQ(oc.reprofile_period, micros(1000));

  EXPECT_THROW(OrchestratorConfig::from_config(with_defaults("handler.F = nope\n")), Error);
  EXPECT_THROW(OrchestratorConfig::from_config(with_defaults("qp.initial = 10\nqp.max = 4\n")), Error);
}
