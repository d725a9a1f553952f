#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "elastic/cache/profiler.hpp"
#include "elastic/core/config.hpp"
#include "elastic/core/cost_model.hpp"
#include "elastic/core/error.hpp"
#include "elastic/core/time.hpp"
#include "elastic/fork/process.hpp"
#include "elastic/orchestrator/handlers.hpp"
#include "elastic/orchestrator/tables.hpp"
#include "elastic/verbs/verbs.hpp"

namespace elastic::orch {

/// How RDMA is provided to functions.
enum class Scheme {
  swift,     // cached control plane, user-space data path, fork shares RDMA
  uncached,  // plain control plane, user-space data path
  kernel,    // kernel-mediated: microsecond connect, syscall per post
  baseline,  // no RDMA at all
};

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::swift: return "swift";
    case Scheme::uncached: return "uncached";
    case Scheme::kernel: return "kernel";
    case Scheme::baseline: return "baseline";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "swift") return Scheme::swift;
  if (s == "uncached") return Scheme::uncached;
  if (s == "kernel") return Scheme::kernel;
  if (s == "baseline") return Scheme::baseline;
  throw Error(Errc::invalid_argument, "unknown scheme " + std::string(s));
}

enum class StartKind { cold, warm, fork };

inline std::string_view to_string(StartKind k) {
  switch (k) {
    case StartKind::cold: return "cold";
    case StartKind::warm: return "warm";
    case StartKind::fork: return "fork";
  }
  return "?";
}

inline StartKind parse_start_kind(std::string_view s) {
  if (s == "cold") return StartKind::cold;
  if (s == "warm") return StartKind::warm;
  if (s == "fork") return StartKind::fork;
  throw Error(Errc::invalid_argument, "unknown start kind " + std::string(s));
}

/// end_to_end = task_launch + visible_control_plane + data_exchange.
struct TimingBreakdown {
  Duration task_launch{};
  Duration visible_control_plane{};
  Duration data_exchange{};
  Duration end_to_end{};
  // Components behind the figures above.
  Duration runtime_init{};
  Duration rdma_setup{};
  Duration queue_wait{};
  Duration exhaustion_wait{};
};

struct RequestOutcome {
  std::uint64_t id = 0;
  RequestSpec spec;
  StartKind kind = StartKind::cold;
  bool fell_back = false;
  std::string container;
  int pid = 0;
  int init_pid = 0;
  std::vector<std::size_t> qp_ids;
  TimingBreakdown timing;
  SimTime arrival{};
  SimTime completed{};
  std::string result;
  std::optional<std::string> error;
  bool aborted = false;
  bool waited_for_qp = false;
  bool done = false;
  // Ledger track ids of the critical control-plane path and the INIT tracks.
  std::uint64_t control_track = 0;
  std::uint64_t rdma_track = 0;
  std::uint64_t runtime_track = 0;
};

struct OrchestratorConfig {
  CostModel costs = CostModel::defaults();
  Scheme scheme = Scheme::swift;
  std::size_t initial_qps = 8;
  std::size_t replenish_threshold = 4;
  std::size_t replenish_batch = 4;
  std::size_t max_qps = 64;
  std::size_t region_bytes = 32768;
  std::uint16_t host_index = 0;
  std::uint64_t seed = 1;
  std::size_t profile_trials = 16;
  std::optional<Duration> reprofile_period;
  std::map<std::string, std::string> handlers;  // function id -> built-in handler name

  /// Reads `qp.*`, `region_bytes`, `handler.<fn>`, `reprofile_period_us`
  /// and the cost model keys.
  static OrchestratorConfig from_config(const Config& cfg) {
    OrchestratorConfig c;
    c.costs = CostModel::from_config(cfg);
    auto size = [&cfg](const char* key, std::size_t& out) {
      const auto v = cfg.get_int(key, static_cast<std::int64_t>(out));
      if (v < 0) throw Error(Errc::config, std::string(key) + " must be >= 0");
      out = static_cast<std::size_t>(v);
    };
    size("qp.initial", c.initial_qps);
    size("qp.replenish_threshold", c.replenish_threshold);
    size("qp.replenish_batch", c.replenish_batch);
    size("qp.max", c.max_qps);
    size("region_bytes", c.region_bytes);
    size("profile_trials", c.profile_trials);
    if (cfg.has("reprofile_period_us")) {
      const double p = cfg.get_double("reprofile_period_us");
      if (p > 0) c.reprofile_period = micros(p);
    }
    for (const auto& [fn, name] : cfg.with_prefix("handler.")) {
      if (handlers::builtins().count(name) == 0) throw Error(Errc::config, "unknown handler " + name);
      c.handlers[fn] = name;
    }
    c.validate();
    return c;
  }

  void validate() const {
    costs.validate();
    if (max_qps < initial_qps) throw Error(Errc::config, "qp.max must be >= qp.initial");
    if (replenish_batch == 0) throw Error(Errc::config, "qp.replenish_batch must be >= 1");
    if (region_bytes == 0) throw Error(Errc::config, "region_bytes must be > 0");
    if (profile_trials == 0) throw Error(Errc::config, "profile_trials must be >= 1");
  }
};

/// Serverless scheduler plus the INIT processes it starts, driven by a
/// deterministic discrete-event loop on virtual time. The scheduler owns the
/// Orchestrator Table; each INIT owns its QP and Assignment tables.
class Orchestrator {
 public:
  struct InitState {
    int pid = 0;
    std::string container;
    std::shared_ptr<verbs::DeviceContext> ctx;
    std::shared_ptr<verbs::ProtectionDomain> pd;
    std::shared_ptr<verbs::CompletionQueue> cq;
    std::shared_ptr<verbs::MemoryRegion> region;
    QpTable qps;
    AssignmentTable assignments;
    std::vector<std::optional<verbs::ConnectInfo>> remotes;
    SimTime ready_at{};
    SimTime listener_free_at{};
    SimTime background_free_at{};
    bool replenishing = false;
    std::vector<std::shared_ptr<verbs::QueuePair>> pending_qps;
    std::deque<std::uint64_t> waiting;

    explicit InitState(int owner) : pid(owner), qps(owner), assignments(owner) {}
  };

  struct InitReport {
    int pid = 0;
    Duration runtime{};
    Duration rdma{};
    Duration elapsed{};
    SimTime ready_at{};
    std::uint64_t runtime_track = 0;
    std::uint64_t rdma_track = 0;
  };

  Orchestrator(std::shared_ptr<verbs::Fabric> fabric, OrchestratorConfig config, CostLedger* ledger = nullptr)
      : fabric_(std::move(fabric)),
        config_(std::move(config)),
        ledger_(ledger),
        host_(std::make_unique<verbs::Host>(
            fabric_, verbs::HostConfig{"compute", config_.host_index, 1, {}, config_.seed}, config_.costs)),
        cache_(host_->registry(), host_->cache_map(), manager_options(config_)),
        procs_(fork::ForkCost::from(config_.costs)) {
    config_.validate();
    if (uses_cache()) cache_.reprofile(clock_.now());
    cached_dispatch_ = cache_.make_dispatch();
    for (const auto& [fn, name] : config_.handlers) handlers_[fn] = handlers::builtins().at(name);
  }

  Orchestrator(const Orchestrator&) = delete;
  Orchestrator& operator=(const Orchestrator&) = delete;

  const OrchestratorConfig& config() const { return config_; }
  verbs::Host& host() { return *host_; }
  verbs::Fabric& fabric() { return *fabric_; }
  cache::CacheManager& cache_manager() { return cache_; }
  fork::ProcessTable& processes() { return procs_; }
  const OrchestratorTable& table() const { return table_; }
  SimTime now() const { return clock_.now(); }

  void register_handler(const std::string& function, Handler h) { handlers_[function] = std::move(h); }

  const InitState& init(int pid) const {
    auto it = inits_.find(pid);
    if (it == inits_.end()) throw Error(Errc::unknown_pid, "no INIT process " + std::to_string(pid));
    return *it->second;
  }

  std::vector<int> init_pids() const {
    std::vector<int> out;
    for (const auto& [pid, _] : inits_) out.push_back(pid);
    return out;
  }

  /// Queues a request; it is admitted when the loop reaches `arrival`.
  std::uint64_t submit(RequestSpec spec, std::optional<SimTime> arrival = std::nullopt) {
    std::lock_guard lock(mu_);
    const std::uint64_t id = next_request_++;
    RequestOutcome& o = outcomes_[id];
    o.id = id;
    o.spec = std::move(spec);
    o.arrival = std::max(arrival.value_or(clock_.now()), clock_.now());
    push(o.arrival, EventKind::arrival, id);
    return id;
  }

  /// Processes every queued event.
  void run() {
    std::lock_guard lock(mu_);
    while (!events_.empty()) step();
    for (auto& [pid, init] : inits_) {
      for (std::uint64_t id : init->waiting) {
        RequestOutcome& o = outcomes_.at(id);
        if (!o.done) finish_with_error(o, "qp pool exhausted");
      }
      init->waiting.clear();
    }
  }

  /// Processes events due at or before `t` and moves the clock to `t`.
  void run_until(SimTime t) {
    std::lock_guard lock(mu_);
    while (!events_.empty() && events_.top().at <= t) step();
    clock_.advance_to(t);
  }

  RequestOutcome handle_request(RequestSpec spec, std::optional<SimTime> arrival = std::nullopt) {
    const std::uint64_t id = submit(std::move(spec), arrival);
    run();
    return outcome(id);
  }

  RequestOutcome outcome(std::uint64_t id) const {
    std::lock_guard lock(mu_);
    auto it = outcomes_.find(id);
    if (it == outcomes_.end()) throw Error(Errc::invalid_argument, "unknown request " + std::to_string(id));
    return it->second;
  }

  std::vector<RequestOutcome> outcomes() const {
    std::lock_guard lock(mu_);
    std::vector<RequestOutcome> out;
    for (const auto& [_, o] : outcomes_) out.push_back(o);
    return out;
  }

  /// Assigns `count` QPs of INIT `init_pid` to `pid` for `destination`,
  /// connecting rows that are not yet connected there. Throws exhausted when
  /// the table cannot supply `count` rows.
  std::vector<std::size_t> assign_qps(int init_pid, int pid, const Gid& destination, std::size_t count,
                                      Track& track) {
    auto ids = prepare_qps(init_pid, destination, count, track);
    grant_qps(init_pid, pid, ids, destination, track.now());
    return ids;
  }

  /// Returns every row held by `pid` to the pool, keeping destinations.
  void release_qps(int init_pid, int pid) {
    InitState& st = mutable_init(init_pid);
    const std::size_t n = st.assignments.release(st.pid, pid);
    if (n > 0) log(clock_.now(), init_actor(init_pid), "qp_release", {{"pid", pid}, {"count", n}});
  }

  /// Background top-up: when unassigned rows fall below the threshold a
  /// batch of fresh QPs is created off the critical path; they join the
  /// tables when the batch completes.
  void replenish(int init_pid, SimTime now) {
    InitState& st = mutable_init(init_pid);
    if (st.replenishing || config_.scheme == Scheme::baseline) return;
    if (st.assignments.unassigned() >= config_.replenish_threshold) return;
    const std::size_t room = config_.max_qps > st.qps.size() ? config_.max_qps - st.qps.size() : 0;
    const std::size_t n = std::min(config_.replenish_batch, room);
    if (n == 0) return;
    Track bg(std::max(now, st.background_free_at), ledger_);
    for (std::size_t i = 0; i < n; ++i) st.pending_qps.push_back(st.pd->create_qp(bg, st.cq));
    st.replenishing = true;
    st.background_free_at = bg.now();
    log(bg.start(), init_actor(init_pid), "replenish_start", {{"count", n}});
    push(bg.now(), EventKind::replenish_done, 0, init_pid);
  }

  /// Closes every QP of the container, clears its tables, kills its
  /// processes and forgets it. Work still running is aborted.
  void terminate_container(const std::string& id) {
    std::lock_guard lock(mu_);
    if (!table_.contains(id)) throw Error(Errc::unknown_container, id);
    const SimTime at = clock_.now();
    const ContainerRecord record = table_.get(id);
    for (int pid : record.init_pids) {
      auto it = inits_.find(pid);
      if (it == inits_.end()) continue;
      InitState& st = *it->second;
      for (std::size_t q = 0; q < st.qps.size(); ++q) {
        st.qps.at(q)->destroy(at);
        log(at, init_actor(pid), "qp_close", {{"qp_id", q}});
      }
      for (auto& qp : st.pending_qps) qp->destroy(at);
      st.pending_qps.clear();
      st.qps.clear(pid);
      st.assignments.clear(pid);
      st.remotes.clear();
      for (std::uint64_t req : st.waiting) {
        RequestOutcome& o = outcomes_.at(req);
        o.aborted = true;
        finish_with_error(o, "container terminated");
      }
      st.waiting.clear();
      st.ctx->close();
      inits_.erase(it);
    }
    for (auto& [child, res] : child_resources_) {
      if (res.container != id) continue;
      for (auto& qp : res.qps) qp->destroy(at);
      res.qps.clear();
    }
    std::erase_if(child_resources_, [&](const auto& kv) { return kv.second.container == id; });
    for (int pid : procs_.live_pids())
      if (procs_.snapshot(pid).container == id) procs_.kill(pid);
    for (auto& [_, o] : outcomes_) {
      if (o.container == id && o.done && o.completed > at && !o.error) {
        o.aborted = true;
        o.error = "container terminated";
      }
    }
    table_.remove(OrchestratorTable::kScheduler, id);
    log(at, "scheduler", "container_terminated", {{"container", id}});
  }

  /// Boots an INIT process in `container`: runtime init and RDMA setup run
  /// as parallel tracks from `start` and join as max.
  InitReport init_process(const std::string& container, const Gid& destination, SimTime start) {
    const int pid = procs_.spawn(container);
    auto st = std::make_unique<InitState>(pid);
    st->container = container;
    Track runtime(start, ledger_);
    runtime.charge("runtime_init", config_.costs.runtime_init);
    Track rdma(start, ledger_);
    if (config_.scheme != Scheme::baseline) {
      try {
        setup_rdma(*st, rdma, destination, primary_dispatch());
      } catch (const Error& first) {
        log(rdma.now(), init_actor(pid), "rdma_setup_failed", {{"error", first.what()}, {"attempt", 1}});
        discard_rdma(*st, rdma.now());
        try {
          setup_rdma(*st, rdma, destination, host_->uncached_dispatch());
        } catch (const Error& second) {
          discard_rdma(*st, rdma.now());
          procs_.kill(pid);
          log(rdma.now(), init_actor(pid), "init_aborted", {{"error", second.what()}});
          throw;
        }
      }
      procs_.attach(pid, st->ctx, st->pd);
      procs_.add_region(pid, st->region);
      procs_.update(pid, [n = st->qps.size()](fork::LogicalProcess& p) { p.established_qps = n; });
    }
    Track joined(start);
    joined.join(runtime);
    joined.join(rdma);
    st->ready_at = joined.now();
    st->listener_free_at = joined.now();
    st->background_free_at = joined.now();
    InitReport report{pid, runtime.elapsed(), rdma.elapsed(), joined.elapsed(), joined.now(), runtime.id(), rdma.id()};
    log(joined.now(), init_actor(pid), "init_ready",
        {{"container", container}, {"runtime_us", to_micros(report.runtime)}, {"rdma_us", to_micros(report.rdma)},
         {"qps", st->qps.size()}});
    inits_[pid] = std::move(st);
    return report;
  }

  /// Violations of the table invariants, empty when all hold.
  std::vector<std::string> check_invariants() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [pid, st] : inits_) {
      if (st->qps.size() != st->assignments.size()) out.push_back("table sizes differ for INIT " + std::to_string(pid));
      for (std::size_t i = 0; i < st->assignments.size(); ++i) {
        const Assignment& a = st->assignments.at(i);
        if (a.pid && !procs_.alive(*a.pid))
          out.push_back("qp " + std::to_string(i) + " held by dead pid " + std::to_string(*a.pid));
        const bool rts = i < st->qps.size() && st->qps.at(i)->state() == verbs::QpState::rts;
        if (a.destination.has_value() != rts)
          out.push_back("qp " + std::to_string(i) + " destination does not match RTS state");
      }
    }
    for (const auto& [id, users] : served_users_)
      if (users.size() > 1) out.push_back("container " + id + " served several users");
    return out;
  }

  /// Compute-host endpoints still registered for QPs the container created.
  std::size_t live_endpoints(const std::string& container) const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    auto it = created_qpns_.find(container);
    if (it == created_qpns_.end()) return 0;
    for (const auto& [gid, qpn] : it->second)
      if (fabric_->is_registered(gid, qpn)) ++n;
    return n;
  }

  const std::vector<std::string>& event_log() const { return log_lines_; }

  std::string event_log_text() const {
    std::string out;
    for (const auto& line : log_lines_) out += line + "\n";
    return out;
  }

 private:
  enum class EventKind { arrival, fork_attempt, child_exit, handler_done, replenish_done };

  struct Event {
    SimTime at;
    std::uint64_t seq;
    EventKind kind;
    std::uint64_t request;
    int pid;
    bool operator>(const Event& o) const { return at != o.at ? at > o.at : seq > o.seq; }
  };

  struct ChildResources {
    std::string container;
    int init_pid = 0;
    std::vector<std::shared_ptr<verbs::QueuePair>> qps;
  };

  static cache::CacheManager::Options manager_options(const OrchestratorConfig& c) {
    cache::CacheManager::Options o;
    o.trials = c.profile_trials;
    o.seed = c.seed;
    o.period = c.reprofile_period;
    return o;
  }

  bool uses_cache() const { return config_.scheme == Scheme::swift || config_.scheme == Scheme::kernel; }

  verbs::DataPath data_path() const {
    return config_.scheme == Scheme::kernel ? verbs::DataPath::kernel_mediated : verbs::DataPath::user_space;
  }

  std::shared_ptr<cache::CacheDispatch> primary_dispatch() const {
    return uses_cache() ? cached_dispatch_ : host_->uncached_dispatch();
  }

  static std::string init_actor(int pid) { return "init:" + std::to_string(pid); }

  InitState& mutable_init(int pid) {
    auto it = inits_.find(pid);
    if (it == inits_.end()) throw Error(Errc::unknown_pid, "no INIT process " + std::to_string(pid));
    return *it->second;
  }

  void push(SimTime at, EventKind kind, std::uint64_t request, int pid = 0) {
    events_.push(Event{at, next_seq_++, kind, request, pid});
  }

  void log(SimTime at, const std::string& actor, const std::string& event, nlohmann::json fields = {}) {
    nlohmann::json rec = {{"t_us", to_micros(at)}, {"actor", actor}, {"event", event}};
    if (!fields.is_null()) rec["fields"] = std::move(fields);
    log_lines_.push_back(rec.dump());
  }

  void track_qp(const std::string& container, const verbs::QueuePair& qp) {
    created_qpns_[container].insert({qp.local_gid(), qp.qpn()});
  }

  void setup_rdma(InitState& st, Track& track, const Gid& destination,
                  std::shared_ptr<cache::CacheDispatch> dispatch) {
    host_->get_device_list(track, *dispatch);
    st.ctx = host_->open_device(track, "dev0", dispatch, data_path());
    st.pd = st.ctx->alloc_pd(track);
    st.region = st.pd->reg_mr(track, config_.region_bytes, verbs::kAllAccess);
    st.cq = st.ctx->create_cq(track, 1u << 16);
    for (std::size_t i = 0; i < config_.initial_qps; ++i) {
      auto qp = st.pd->create_qp(track, st.cq);
      track_qp(st.container, *qp);
      st.qps.push(st.pid, qp);
      st.assignments.append(st.pid);
      st.remotes.emplace_back();
    }
    for (std::size_t i = 0; i < config_.initial_qps; ++i) connect_row(st, i, destination, track);
  }

  void discard_rdma(InitState& st, SimTime at) {
    for (const auto& qp : st.qps.entries()) qp->destroy(at);
    st.qps.clear(st.pid);
    st.assignments.clear(st.pid);
    st.remotes.clear();
    if (st.ctx) st.ctx->close();
    st.ctx.reset();
    st.pd.reset();
    st.region.reset();
    st.cq.reset();
  }

  // Connects row `id` to `destination`. A row connected elsewhere is
  // replaced by a fresh QP at the same index.
  void connect_row(InitState& st, std::size_t id, const Gid& destination, Track& track) {
    auto qp = st.qps.at(id);
    if (qp->state() != verbs::QpState::reset) {
      qp->destroy(track.now());
      qp = st.pd->create_qp(track, st.cq);
      track_qp(st.container, *qp);
      st.qps.replace(st.pid, id, qp);
      st.assignments.set_destination(st.pid, id, std::nullopt);
      st.remotes.at(id).reset();
    }
    st.remotes.at(id) = verbs::connect_to(track, *qp, destination);
    st.assignments.set_destination(st.pid, id, destination);
    log(track.now(), init_actor(st.pid), "qp_connect", {{"qp_id", id}, {"destination", destination.to_string()}});
    if (table_.contains(st.container))
      table_.record_connection(OrchestratorTable::kScheduler, st.container, {st.pid, id, destination});
  }

  // Selects `count` rows and connects them to `destination`; throws
  // exhausted (after requesting a top-up) when the pool is short.
  std::vector<std::size_t> prepare_qps(int init_pid, const Gid& destination, std::size_t count, Track& track) {
    InitState& st = mutable_init(init_pid);
    const auto ids = select_qps(st.assignments.entries(), destination, count);
    if (ids.size() < count) {
      replenish(init_pid, track.now());
      throw Error(Errc::exhausted, "INIT " + std::to_string(init_pid) + " has " + std::to_string(ids.size()) +
                                       " of " + std::to_string(count) + " qps");
    }
    for (std::size_t id : ids)
      if (st.assignments.at(id).destination != destination) connect_row(st, id, destination, track);
    return ids;
  }

  void grant_qps(int init_pid, int pid, const std::vector<std::size_t>& ids, const Gid& destination, SimTime at) {
    InitState& st = mutable_init(init_pid);
    for (std::size_t id : ids) st.assignments.assign(st.pid, id, pid);
    log(at, init_actor(init_pid), "qp_assign", {{"pid", pid}, {"qp_ids", ids}, {"destination", destination.to_string()}});
    replenish(init_pid, at);
  }

  Handler handler_for(const std::string& function) const {
    auto it = handlers_.find(function);
    return it == handlers_.end() ? Handler(handlers::noop) : it->second;
  }

  // Runs the handler on `track`; exceptions end up in the outcome.
  void run_handler(RequestOutcome& o, FunctionContext& ctx, Track& track) {
    ctx.track = &track;
    try {
      o.result = handler_for(o.spec.function)(o.spec, ctx);
    } catch (const std::exception& e) {
      o.error = std::string("handler: ") + e.what();
    }
    for (const auto& qp : ctx.qps) qp->cq()->drain();
  }

  FunctionContext context_for(const InitState& st, const std::vector<std::size_t>& ids,
                              std::shared_ptr<verbs::MemoryRegion> mr) const {
    FunctionContext ctx;
    ctx.pd = st.pd;
    ctx.mr = std::move(mr);
    ctx.qp_ids = ids;
    for (std::size_t id : ids) {
      ctx.qps.push_back(st.qps.at(id));
      if (st.remotes.at(id)) ctx.remotes.push_back(*st.remotes.at(id));
    }
    return ctx;
  }

  void finish(RequestOutcome& o, SimTime completed) {
    o.completed = completed;
    o.done = true;
    TimingBreakdown& t = o.timing;
    t.end_to_end = t.task_launch + t.visible_control_plane + t.data_exchange;
    log(completed, "scheduler", "request_done",
        {{"request", o.id},
         {"kind", std::string(to_string(o.kind))},
         {"end_to_end_us", to_micros(t.end_to_end)},
         {"error", o.error ? *o.error : std::string()}});
  }

  void finish_with_error(RequestOutcome& o, const std::string& error) {
    o.error = error;
    finish(o, std::max(clock_.now(), o.arrival));
  }

  void step() {
    const Event ev = events_.top();
    events_.pop();
    clock_.advance_to(ev.at);
    if (cache_.maintain(clock_.now())) log(clock_.now(), "scheduler", "cache_reprofiled");
    switch (ev.kind) {
      case EventKind::arrival: on_arrival(outcomes_.at(ev.request)); break;
      case EventKind::fork_attempt: on_fork_attempt(outcomes_.at(ev.request), ev.pid); break;
      case EventKind::child_exit: on_child_exit(ev.pid); break;
      case EventKind::handler_done: on_handler_done(ev.pid, ev.request); break;
      case EventKind::replenish_done: on_replenish_done(ev.pid); break;
    }
  }

  void on_arrival(RequestOutcome& o) {
    const auto container = table_.find(o.spec.user, o.spec.function);
    log(o.arrival, "scheduler", "arrival",
        {{"request", o.id}, {"user", o.spec.user}, {"function", o.spec.function},
         {"latency", o.spec.latency == LatencyClass::fast ? "fast" : "normal"}});
    if (!container) {
      o.fell_back = o.spec.latency == LatencyClass::fast;
      cold_start(o);
    } else if (o.spec.latency == LatencyClass::normal) {
      warm_start(o, *container);
    } else {
      fork_start(o, *container);
    }
  }

  void cold_start(RequestOutcome& o) {
    o.kind = StartKind::cold;
    const std::string id = "c" + std::to_string(next_container_++);
    o.container = id;
    table_.add(OrchestratorTable::kScheduler, ContainerRecord{id, o.spec.user, o.spec.function, {}, {}});
    served_users_[id].insert(o.spec.user);
    log(o.arrival, "scheduler", "start", {{"request", o.id}, {"kind", "cold"}, {"container", id}});
    Track launch(o.arrival, ledger_);
    launch.charge("container_cold_launch", config_.costs.container_cold_launch);
    if (!run_in_new_init(o, id, launch)) {
      table_.remove(OrchestratorTable::kScheduler, id);
      log(clock_.now(), "scheduler", "container_failed", {{"container", id}});
    }
  }

  void warm_start(RequestOutcome& o, const std::string& id) {
    o.kind = StartKind::warm;
    o.container = id;
    served_users_[id].insert(o.spec.user);
    log(o.arrival, "scheduler", "start", {{"request", o.id}, {"kind", "warm"}, {"container", id}});
    Track exec(o.arrival, ledger_);
    exec.charge("container_warm_exec", config_.costs.container_warm_exec);
    run_in_new_init(o, id, exec);
  }

  // Starts an INIT in container `id` once `launch` is done and runs the
  // request's handler in it when ready. Returns false when INIT setup failed.
  bool run_in_new_init(RequestOutcome& o, const std::string& id, const Track& launch) {
    InitReport report;
    try {
      report = init_process(id, o.spec.destination, launch.now());
    } catch (const Error& e) {
      finish_with_error(o, std::string("init: ") + e.what());
      return false;
    }
    table_.add_init(OrchestratorTable::kScheduler, id, report.pid);
    InitState& st = mutable_init(report.pid);
    for (std::size_t q = 0; q < st.assignments.size(); ++q)
      if (st.assignments.at(q).destination)
        table_.record_connection(OrchestratorTable::kScheduler, id, {report.pid, q, *st.assignments.at(q).destination});
    o.pid = report.pid;
    o.init_pid = report.pid;
    o.rdma_track = report.rdma_track;
    o.runtime_track = report.runtime_track;
    o.timing.runtime_init = report.runtime;
    o.timing.rdma_setup = report.rdma;
    o.timing.task_launch = launch.elapsed() + report.runtime;
    o.timing.visible_control_plane = std::max(Duration::zero(), report.rdma - report.runtime);

    Track control(report.ready_at, ledger_);
    o.control_track = control.id();
    if (config_.scheme != Scheme::baseline) {
      try {
        o.qp_ids = assign_qps(st.pid, st.pid, o.spec.destination, 1, control);
      } catch (const Error& e) {
        o.error = std::string("assign: ") + e.what();
      }
      o.timing.visible_control_plane += control.elapsed();
    }
    Track data(control.now(), ledger_);
    if (!o.error) {
      FunctionContext ctx = context_for(st, o.qp_ids, st.region);
      run_handler(o, ctx, data);
    }
    o.timing.data_exchange = data.elapsed();
    st.listener_free_at = data.now();
    finish(o, data.now());
    push(data.now(), EventKind::handler_done, o.id, st.pid);
    return true;
  }

  void fork_start(RequestOutcome& o, const std::string& id) {
    o.kind = StartKind::fork;
    o.container = id;
    served_users_[id].insert(o.spec.user);
    const ContainerRecord& rec = table_.get(id);
    int chosen = 0;
    std::size_t best = 0;
    for (int pid : rec.init_pids) {
      auto it = inits_.find(pid);
      if (it == inits_.end()) continue;
      const std::size_t score = it->second->assignments.unassigned_to(o.spec.destination);
      if (chosen == 0 || score > best) {
        chosen = pid;
        best = score;
      }
    }
    if (chosen == 0) {
      finish_with_error(o, "no INIT process to fork from");
      return;
    }
    o.init_pid = chosen;
    log(o.arrival, "scheduler", "start", {{"request", o.id}, {"kind", "fork"}, {"container", id}, {"init", chosen}});
    const InitState& st = init(chosen);
    push(std::max({o.arrival, st.ready_at, st.listener_free_at}), EventKind::fork_attempt, o.id, chosen);
  }

  void on_fork_attempt(RequestOutcome& o, int init_pid) {
    auto it = inits_.find(init_pid);
    if (it == inits_.end()) {
      if (!o.done) finish_with_error(o, "INIT process gone");
      return;
    }
    InitState& st = *it->second;
    const SimTime s = clock_.now();
    if (st.listener_free_at > s) {
      push(st.listener_free_at, EventKind::fork_attempt, o.id, init_pid);
      return;
    }
    const bool share = config_.scheme == Scheme::swift;
    Track control(s, ledger_);
    o.control_track = control.id();
    std::vector<std::size_t> ids;
    if (share) {
      try {
        ids = prepare_qps(init_pid, o.spec.destination, 1, control);
      } catch (const Error& e) {
        if (e.code() != Errc::exhausted) {
          finish_with_error(o, std::string("assign: ") + e.what());
          return;
        }
        o.waited_for_qp = true;
        wait_started_.emplace(o.id, s);
        st.waiting.push_back(o.id);
        log(s, init_actor(init_pid), "qp_exhausted", {{"request", o.id}});
        return;
      }
    }
    if (auto w = wait_started_.find(o.id); w != wait_started_.end()) {
      o.timing.exhaustion_wait = s - w->second;
      wait_started_.erase(w);
    }

    Track launch(control.now(), ledger_);
    const int child = procs_.fork_process(launch, init_pid, share);
    st.listener_free_at = launch.now();
    o.pid = child;
    o.qp_ids = ids;
    if (share) grant_qps(init_pid, child, ids, o.spec.destination, launch.now());
    procs_.update(child, [&](fork::LogicalProcess& p) { p.qp_ids = ids; });
    log(launch.now(), init_actor(init_pid), "fork", {{"child", child}, {"qp_ids", ids}});

    Track own_setup(launch.now(), ledger_);
    FunctionContext ctx;
    if (share) {
      ctx = context_for(st, ids, procs_.snapshot(child).regions.at(0));
    } else if (config_.scheme != Scheme::baseline) {
      try {
        ctx = child_setup(st, child, o.spec.destination, own_setup);
      } catch (const Error& e) {
        o.error = std::string("child setup: ") + e.what();
      }
    }
    Track data(own_setup.now(), ledger_);
    if (!o.error) run_handler(o, ctx, data);

    o.timing.queue_wait = (s - o.arrival) - o.timing.exhaustion_wait;
    o.timing.task_launch = o.timing.queue_wait + launch.elapsed();
    o.timing.visible_control_plane = o.timing.exhaustion_wait + control.elapsed() + own_setup.elapsed();
    o.timing.data_exchange = data.elapsed();
    finish(o, data.now());
    push(data.now(), EventKind::child_exit, o.id, child);
  }

  // A child that does not inherit RDMA state sets up its own connection.
  FunctionContext child_setup(InitState& st, int child, const Gid& destination, Track& track) {
    ChildResources res{st.container, st.pid, {}};
    FunctionContext ctx;
    if (config_.scheme == Scheme::kernel) {
      // Kernel-resident context and PD are shared; only the connection and
      // a kernel-side buffer are per process.
      ctx.pd = st.pd;
      ctx.mr = st.pd->register_fork_copy(*st.region);
      procs_.add_region(child, ctx.mr);
      auto qp_cq = std::make_shared<verbs::CompletionQueue>(fabric_, 1024);
      auto qp = st.pd->create_qp(track, qp_cq);
      track_qp(st.container, *qp);
      ctx.remotes.push_back(verbs::connect_to(track, *qp, destination));
      ctx.qps.push_back(qp);
      res.qps.push_back(qp);
    } else {
      auto dispatch = host_->uncached_dispatch();
      host_->get_device_list(track, *dispatch);
      auto dev = host_->open_device(track, "dev0", dispatch, data_path());
      ctx.pd = dev->alloc_pd(track);
      ctx.mr = ctx.pd->reg_mr(track, config_.region_bytes, verbs::kAllAccess);
      auto cq = dev->create_cq(track, 1024);
      auto qp = ctx.pd->create_qp(track, cq);
      track_qp(st.container, *qp);
      ctx.remotes.push_back(verbs::connect_to(track, *qp, destination));
      ctx.qps.push_back(qp);
      res.qps.push_back(qp);
    }
    child_resources_[child] = std::move(res);
    return ctx;
  }

  void on_child_exit(int child) {
    if (!procs_.alive(child)) return;
    const int parent = *procs_.snapshot(child).parent;
    procs_.exit_process(child);
    if (auto it = child_resources_.find(child); it != child_resources_.end()) {
      for (auto& qp : it->second.qps) qp->destroy(clock_.now());
      child_resources_.erase(it);
    }
    log(clock_.now(), "child:" + std::to_string(child), "exit");
    if (inits_.count(parent) == 0) return;
    release_qps(parent, child);
    retry_waiting(parent);
  }

  void on_handler_done(int init_pid, std::uint64_t) {
    if (inits_.count(init_pid) == 0) return;
    release_qps(init_pid, init_pid);
    retry_waiting(init_pid);
  }

  void on_replenish_done(int init_pid) {
    auto it = inits_.find(init_pid);
    if (it == inits_.end()) return;
    InitState& st = *it->second;
    for (auto& qp : st.pending_qps) {
      track_qp(st.container, *qp);
      st.qps.push(st.pid, qp);
      st.assignments.append(st.pid);
      st.remotes.emplace_back();
    }
    log(clock_.now(), init_actor(init_pid), "replenish_done", {{"count", st.pending_qps.size()}, {"total", st.qps.size()}});
    procs_.update(init_pid, [n = st.qps.size()](fork::LogicalProcess& p) { p.established_qps = n; });
    st.pending_qps.clear();
    st.replenishing = false;
    retry_waiting(init_pid);
    replenish(init_pid, clock_.now());
  }

  void retry_waiting(int init_pid) {
    InitState& st = mutable_init(init_pid);
    std::deque<std::uint64_t> waiting;
    waiting.swap(st.waiting);
    for (std::uint64_t id : waiting) push(clock_.now(), EventKind::fork_attempt, id, init_pid);
  }

  std::shared_ptr<verbs::Fabric> fabric_;
  OrchestratorConfig config_;
  CostLedger* ledger_;
  std::unique_ptr<verbs::Host> host_;
  cache::CacheManager cache_;
  std::shared_ptr<cache::CacheDispatch> cached_dispatch_;
  fork::ProcessTable procs_;
  OrchestratorTable table_;
  std::map<int, std::unique_ptr<InitState>> inits_;
  std::map<int, ChildResources> child_resources_;
  std::map<std::string, Handler> handlers_;
  std::map<std::string, std::set<std::string>> served_users_;
  std::map<std::string, std::set<std::pair<Gid, std::uint32_t>>> created_qpns_;
  std::map<std::uint64_t, RequestOutcome> outcomes_;
  std::map<std::uint64_t, SimTime> wait_started_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  VirtualClock clock_;
  std::vector<std::string> log_lines_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_request_ = 1;
  std::uint64_t next_container_ = 1;
  mutable std::recursive_mutex mu_;
};

}  // namespace elastic::orch
