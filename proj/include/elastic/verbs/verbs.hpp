#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "elastic/cache/dispatch.hpp"
#include "elastic/core/cost_model.hpp"
#include "elastic/core/error.hpp"
#include "elastic/core/gid.hpp"
#include "elastic/core/time.hpp"
#include "elastic/verbs/subroutines.hpp"
#include "elastic/verbs/types.hpp"

namespace elastic::verbs {

class QueuePair;

/// Passive side of connection establishment, bound to one gid.
class Acceptor {
 public:
  virtual ~Acceptor() = default;
  virtual ConnectInfo accept(const Gid& peer_gid, std::uint32_t peer_qpn) = 0;
  virtual void disconnect(std::uint32_t local_qpn) = 0;
};

/// In-process lossless network. Endpoints are keyed by (gid, qp number).
/// One recursive mutex serializes every queue and memory mutation, which is
/// what gives per-QP-pair exactly-once in-order delivery under concurrency.
class Fabric {
 public:
  std::recursive_mutex& mutex() const { return mu_; }

  void register_endpoint(const Gid& gid, std::uint32_t qpn, std::weak_ptr<QueuePair> qp) {
    std::lock_guard lock(mu_);
    endpoints_[{gid, qpn}] = std::move(qp);
  }

  void deregister_endpoint(const Gid& gid, std::uint32_t qpn) {
    std::lock_guard lock(mu_);
    endpoints_.erase({gid, qpn});
  }

  std::shared_ptr<QueuePair> lookup(const Gid& gid, std::uint32_t qpn) const {
    std::lock_guard lock(mu_);
    auto it = endpoints_.find({gid, qpn});
    return it == endpoints_.end() ? nullptr : it->second.lock();
  }

  bool is_registered(const Gid& gid, std::uint32_t qpn) const {
    std::lock_guard lock(mu_);
    return endpoints_.count({gid, qpn}) != 0;
  }

  std::size_t endpoint_count() const {
    std::lock_guard lock(mu_);
    return endpoints_.size();
  }

  std::vector<std::pair<Gid, std::uint32_t>> endpoints() const {
    std::lock_guard lock(mu_);
    std::vector<std::pair<Gid, std::uint32_t>> out;
    for (const auto& [key, _] : endpoints_) out.push_back(key);
    return out;
  }

  void add_acceptor(const Gid& gid, Acceptor* acceptor) {
    std::lock_guard lock(mu_);
    acceptors_[gid] = acceptor;
  }

  void remove_acceptor(const Gid& gid) {
    std::lock_guard lock(mu_);
    acceptors_.erase(gid);
  }

  ConnectInfo request_connection(const Gid& remote, const Gid& local, std::uint32_t local_qpn) {
    std::lock_guard lock(mu_);
    auto it = acceptors_.find(remote);
    if (it == acceptors_.end()) throw Error(Errc::no_route, "no listener at " + remote.to_string());
    return it->second->accept(local, local_qpn);
  }

  void notify_disconnect(const Gid& remote, std::uint32_t remote_qpn) {
    std::lock_guard lock(mu_);
    if (auto it = acceptors_.find(remote); it != acceptors_.end()) it->second->disconnect(remote_qpn);
  }

  void set_logging(bool on) {
    std::lock_guard lock(mu_);
    logging_ = on;
  }

  void record(const DeliveryRecord& r) {
    if (logging_) log_.push_back(r);
  }

  std::vector<DeliveryRecord> log() const {
    std::lock_guard lock(mu_);
    return log_;
  }

  void clear_log() {
    std::lock_guard lock(mu_);
    log_.clear();
  }

 private:
  mutable std::recursive_mutex mu_;
  std::map<std::pair<Gid, std::uint32_t>, std::weak_ptr<QueuePair>> endpoints_;
  std::map<Gid, Acceptor*> acceptors_;
  bool logging_ = true;
  std::vector<DeliveryRecord> log_;
};

struct HostConfig {
  std::string name = "host0";
  std::uint16_t index = 0;
  std::size_t device_count = 1;
  HostEnv env{};
  std::uint64_t seed = 1;
};

struct DeviceInfo {
  std::string id;
  Gid gid;
};

class DeviceContext;
class ProtectionDomain;
class MemoryRegion;
class CompletionQueue;

/// A simulated machine: its NICs, its internal subroutine registry and the
/// single cache map shared by everything running on it.
class Host {
 public:
  using Customizer = std::function<void(cache::FunctionRegistry&)>;

  Host(std::shared_ptr<Fabric> fabric, HostConfig config, CostModel costs, const Customizer& customize = {})
      : fabric_(std::move(fabric)),
        config_(std::move(config)),
        costs_(std::move(costs)),
        state_(std::make_shared<HostState>()),
        registry_(make_verbs_registry(costs_, config_.env, state_)),
        cache_map_(std::make_shared<cache::CacheMap>()),
        rng_(config_.seed) {
    costs_.validate();
    if (customize) customize(registry_);
    for (std::size_t i = 0; i < config_.device_count; ++i)
      devices_.push_back({"dev" + std::to_string(i), Gid::for_device(config_.index, static_cast<std::uint16_t>(i))});
  }

  Host(const Host&) = delete;
  Host& operator=(const Host&) = delete;

  const std::string& name() const { return config_.name; }
  const HostConfig& config() const { return config_; }
  const CostModel& costs() const { return costs_; }
  Fabric& fabric() const { return *fabric_; }
  const std::shared_ptr<Fabric>& fabric_ptr() const { return fabric_; }
  cache::FunctionRegistry& registry() { return registry_; }
  const cache::FunctionRegistry& registry() const { return registry_; }
  HostState& state() const { return *state_; }
  const std::shared_ptr<cache::CacheMap>& cache_map() const { return cache_map_; }
  const std::vector<DeviceInfo>& devices() const { return devices_; }

  std::shared_ptr<cache::CacheDispatch> cached_dispatch() const {
    return std::make_shared<cache::CacheDispatch>(registry_, cache_map_);
  }
  std::shared_ptr<cache::CacheDispatch> uncached_dispatch() const {
    return std::make_shared<cache::CacheDispatch>(registry_);
  }

  std::vector<std::string> get_device_list(Track& track, cache::CacheDispatch& dispatch) const {
    dispatch.run_chain(api::get_device_list, track);
    std::vector<std::string> ids;
    for (const auto& d : devices_) ids.push_back(d.id);
    return ids;
  }

  inline std::shared_ptr<DeviceContext> open_device(Track& track, std::string_view id,
                                                    std::shared_ptr<cache::CacheDispatch> dispatch,
                                                    DataPath path = DataPath::user_space);

  /// Non-zero 32-bit key not present in `taken`.
  std::uint32_t draw_key(const std::set<std::uint32_t>& taken) {
    std::lock_guard lock(rng_mu_);
    std::uniform_int_distribution<std::uint32_t> dist(1, 0xffffffffu);
    for (;;) {
      const std::uint32_t k = dist(rng_);
      if (taken.count(k) == 0) return k;
    }
  }

 private:
  std::shared_ptr<Fabric> fabric_;
  HostConfig config_;
  CostModel costs_;
  std::shared_ptr<HostState> state_;
  cache::FunctionRegistry registry_;
  std::shared_ptr<cache::CacheMap> cache_map_;
  std::vector<DeviceInfo> devices_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

class DeviceContext : public std::enable_shared_from_this<DeviceContext> {
 public:
  DeviceContext(Host& host, DeviceInfo device, std::shared_ptr<cache::CacheDispatch> dispatch, DataPath path,
                std::int64_t fd)
      : host_(&host), device_(std::move(device)), dispatch_(std::move(dispatch)), path_(path), fd_(fd) {}

  Host& host() const { return *host_; }
  const DeviceInfo& device() const { return device_; }
  const Gid& gid() const { return device_.gid; }
  DataPath path() const { return path_; }
  cache::CacheDispatch& dispatch() const { return *dispatch_; }
  std::int64_t fd() const { return fd_; }
  bool is_open() const { return open_; }

  void close() { open_ = false; }

  void require_open() const {
    if (!open_) throw Error(Errc::closed_context, "device context " + device_.id + " is closed");
  }

  inline std::shared_ptr<ProtectionDomain> alloc_pd(Track& track);
  inline std::shared_ptr<CompletionQueue> create_cq(Track& track, std::size_t depth = 128);

 private:
  Host* host_;
  DeviceInfo device_;
  std::shared_ptr<cache::CacheDispatch> dispatch_;
  DataPath path_;
  std::int64_t fd_;
  bool open_ = true;
};

class MemoryRegion {
 public:
  MemoryRegion(std::shared_ptr<Fabric> fabric, std::size_t length, Access access, std::uint32_t lkey,
               std::uint32_t rkey, std::int64_t pd_id, std::weak_ptr<ProtectionDomain> pd = {})
      : fabric_(std::move(fabric)),
        buf_(length),
        access_(access),
        lkey_(lkey),
        rkey_(rkey),
        pd_id_(pd_id),
        pd_(std::move(pd)) {}

  std::size_t length() const { return buf_.size(); }
  Access access() const { return access_; }
  std::uint32_t lkey() const { return lkey_; }
  std::uint32_t rkey() const { return rkey_; }
  std::int64_t pd_id() const { return pd_id_; }
  std::shared_ptr<ProtectionDomain> pd_ptr() const { return pd_.lock(); }
  bool registered() const { return registered_; }

  bool in_bounds(std::size_t offset, std::size_t len) const { return offset <= buf_.size() && len <= buf_.size() - offset; }

  /// Local CPU store.
  void write(std::size_t offset, std::span<const std::byte> data) {
    std::lock_guard lock(fabric_->mutex());
    if (!in_bounds(offset, data.size())) throw Error(Errc::invalid_argument, "write outside memory region");
    std::copy(data.begin(), data.end(), buf_.begin() + static_cast<std::ptrdiff_t>(offset));
  }

  std::vector<std::byte> read(std::size_t offset, std::size_t len) const {
    std::lock_guard lock(fabric_->mutex());
    if (!in_bounds(offset, len)) throw Error(Errc::invalid_argument, "read outside memory region");
    return {buf_.begin() + static_cast<std::ptrdiff_t>(offset),
            buf_.begin() + static_cast<std::ptrdiff_t>(offset + len)};
  }

  std::vector<std::byte> contents() const { return read(0, buf_.size()); }

 private:
  friend class QueuePair;
  friend class ProtectionDomain;

  std::shared_ptr<Fabric> fabric_;
  std::vector<std::byte> buf_;
  Access access_;
  std::uint32_t lkey_;
  std::uint32_t rkey_;
  std::int64_t pd_id_;
  std::weak_ptr<ProtectionDomain> pd_;
  bool registered_ = true;
};

class CompletionQueue {
 public:
  CompletionQueue(std::shared_ptr<Fabric> fabric, std::size_t depth) : fabric_(std::move(fabric)), depth_(depth) {}

  std::size_t depth() const { return depth_; }

  std::size_t pending() const {
    std::lock_guard lock(fabric_->mutex());
    return q_.size();
  }

  /// Completions already visible at the track's current time, in order.
  std::vector<WorkCompletion> poll(Track& track, std::size_t max) {
    std::lock_guard lock(fabric_->mutex());
    std::vector<WorkCompletion> out;
    while (!q_.empty() && out.size() < max && q_.front().ready_at <= track.now()) {
      out.push_back(q_.front());
      q_.pop_front();
    }
    return out;
  }

  /// Blocks (in virtual time) until `n` completions are visible. Returns
  /// fewer if fewer have been generated.
  std::vector<WorkCompletion> wait(Track& track, std::size_t n) {
    std::lock_guard lock(fabric_->mutex());
    std::vector<WorkCompletion> out;
    while (!q_.empty() && out.size() < n) {
      track.wait_until(q_.front().ready_at);
      out.push_back(q_.front());
      q_.pop_front();
    }
    return out;
  }

  std::vector<WorkCompletion> drain() {
    std::lock_guard lock(fabric_->mutex());
    std::vector<WorkCompletion> out(q_.begin(), q_.end());
    q_.clear();
    return out;
  }

 private:
  friend class QueuePair;
  void push(const WorkCompletion& wc) { q_.push_back(wc); }

  std::shared_ptr<Fabric> fabric_;
  std::size_t depth_;
  std::deque<WorkCompletion> q_;
};

class ProtectionDomain : public std::enable_shared_from_this<ProtectionDomain> {
 public:
  ProtectionDomain(std::shared_ptr<DeviceContext> ctx, std::int64_t id) : ctx_(std::move(ctx)), id_(id) {}

  std::int64_t id() const { return id_; }
  DeviceContext& context() const { return *ctx_; }
  const std::shared_ptr<DeviceContext>& context_ptr() const { return ctx_; }

  std::shared_ptr<MemoryRegion> reg_mr(Track& track, std::size_t length, Access access) {
    ctx_->require_open();
    if (length == 0) throw Error(Errc::invalid_argument, "memory region length must be > 0");
    ctx_->dispatch().run_chain(api::reg_mr, track);
    return make_region(length, access);
  }

  /// Private copy of `src` for a forked child: same size and access, fresh
  /// keys in this PD, buffer copied at the fork instant.
  std::shared_ptr<MemoryRegion> register_fork_copy(const MemoryRegion& src) {
    std::lock_guard lock(ctx_->host().fabric().mutex());
    auto mr = make_region(src.length(), src.access());
    mr->buf_ = src.buf_;
    return mr;
  }

  void deregister(MemoryRegion& mr) {
    std::lock_guard lock(ctx_->host().fabric().mutex());
    if (!mr.registered_) return;
    mr.registered_ = false;
    by_lkey_.erase(mr.lkey());
    by_rkey_.erase(mr.rkey());
  }

  std::shared_ptr<MemoryRegion> find_lkey(std::uint32_t key) const {
    std::lock_guard lock(ctx_->host().fabric().mutex());
    auto it = by_lkey_.find(key);
    return it == by_lkey_.end() ? nullptr : it->second.lock();
  }

  std::shared_ptr<MemoryRegion> find_rkey(std::uint32_t key) const {
    std::lock_guard lock(ctx_->host().fabric().mutex());
    auto it = by_rkey_.find(key);
    return it == by_rkey_.end() ? nullptr : it->second.lock();
  }

  std::size_t region_count() const {
    std::lock_guard lock(ctx_->host().fabric().mutex());
    return by_lkey_.size();
  }

  inline std::shared_ptr<QueuePair> create_qp(Track& track, std::shared_ptr<CompletionQueue> cq, QpCaps caps = {});

 private:
  std::shared_ptr<MemoryRegion> make_region(std::size_t length, Access access) {
    std::lock_guard lock(ctx_->host().fabric().mutex());
    std::set<std::uint32_t> taken;
    for (const auto& [k, _] : by_lkey_) taken.insert(k);
    for (const auto& [k, _] : by_rkey_) taken.insert(k);
    const std::uint32_t lkey = ctx_->host().draw_key(taken);
    taken.insert(lkey);
    const std::uint32_t rkey = ctx_->host().draw_key(taken);
    auto mr = std::make_shared<MemoryRegion>(ctx_->host().fabric_ptr(), length, access, lkey, rkey, id_, weak_from_this());
    by_lkey_[lkey] = mr;
    by_rkey_[rkey] = mr;
    return mr;
  }

  std::shared_ptr<DeviceContext> ctx_;
  std::int64_t id_;
  std::map<std::uint32_t, std::weak_ptr<MemoryRegion>> by_lkey_;
  std::map<std::uint32_t, std::weak_ptr<MemoryRegion>> by_rkey_;
};

/// Reliable-connected queue pair.
class QueuePair : public std::enable_shared_from_this<QueuePair> {
 public:
  using ReceiveHook = std::function<void(QueuePair&, const WorkCompletion&)>;

  QueuePair(std::shared_ptr<ProtectionDomain> pd, std::shared_ptr<CompletionQueue> cq, std::uint32_t qpn, QpCaps caps)
      : pd_(std::move(pd)), cq_(std::move(cq)), qpn_(qpn), caps_(caps), local_gid_(pd_->context().gid()) {}

  std::uint32_t qpn() const { return qpn_; }
  Transport transport() const { return Transport::rc; }
  const Gid& local_gid() const { return local_gid_; }
  ProtectionDomain& pd() const { return *pd_; }
  const std::shared_ptr<ProtectionDomain>& pd_ptr() const { return pd_; }
  const std::shared_ptr<CompletionQueue>& cq() const { return cq_; }
  const QpCaps& caps() const { return caps_; }

  QpState state() const {
    std::lock_guard lock(fabric().mutex());
    return state_;
  }
  std::optional<Gid> remote_gid() const {
    std::lock_guard lock(fabric().mutex());
    return remote_gid_;
  }
  std::optional<std::uint32_t> remote_qpn() const {
    std::lock_guard lock(fabric().mutex());
    return remote_qpn_;
  }
  std::uint64_t next_send_psn() const {
    std::lock_guard lock(fabric().mutex());
    return next_send_psn_;
  }
  std::uint64_t expected_recv_psn() const {
    std::lock_guard lock(fabric().mutex());
    return expected_recv_psn_;
  }
  std::size_t outstanding_sends() const {
    std::lock_guard lock(fabric().mutex());
    return tx_.size();
  }
  std::size_t posted_recvs() const {
    std::lock_guard lock(fabric().mutex());
    return rq_.size();
  }
  bool destroyed() const {
    std::lock_guard lock(fabric().mutex());
    return destroyed_;
  }

  void set_receive_hook(ReceiveHook hook) {
    std::lock_guard lock(fabric().mutex());
    hook_ = std::move(hook);
  }

  static bool legal_transition(QpState from, QpState to) {
    if (to == QpState::error) return true;
    switch (from) {
      case QpState::reset: return to == QpState::init;
      case QpState::init: return to == QpState::rtr;
      case QpState::rtr: return to == QpState::rts;
      default: return false;
    }
  }

  void modify(Track& track, const QpAttr& attr) {
    std::lock_guard lock(fabric().mutex());
    if (destroyed_) throw Error(Errc::closed_context, "qp destroyed");
    pd_->context().require_open();
    if (!legal_transition(state_, attr.target))
      throw Error(Errc::illegal_transition,
                  std::string(to_string(state_)) + " -> " + std::string(to_string(attr.target)));
    if (attr.target == QpState::rtr && (!attr.remote_gid || !attr.remote_qpn))
      throw Error(Errc::missing_remote, "RTR needs remote gid and qp number");

    const bool user_path = pd_->context().path() == DataPath::user_space;
    switch (attr.target) {
      case QpState::init:
        if (user_path) pd_->context().dispatch().run_chain(api::modify_qp_init, track);
        break;
      case QpState::rtr:
        if (user_path) pd_->context().dispatch().run_chain(api::modify_qp_rtr, track);
        remote_gid_ = attr.remote_gid;
        remote_qpn_ = attr.remote_qpn;
        break;
      case QpState::rts:
        if (user_path) pd_->context().dispatch().run_chain(api::modify_qp_rts, track);
        track.charge("handshake", pd_->context().host().costs().qp_connect_cost);
        break;
      case QpState::error:
      case QpState::reset:
        break;
    }
    state_ = attr.target;
    if (state_ == QpState::error) flush_all(track.now());
  }

  void post_send(Track& track, std::span<const WorkRequest> wrs) {
    std::lock_guard lock(fabric().mutex());
    if (tx_.size() + wrs.size() > caps_.max_send_wr) throw Error(Errc::queue_full, "send queue full");
    if (cq_->q_.size() + tx_.size() + wrs.size() > cq_->depth()) throw Error(Errc::queue_full, "completion queue full");
    charge_post(track, wrs.size(), [&](std::size_t j, SimTime ready) {
      TxEntry e{wrs[j], next_send_psn_, ready};
      if (state_ != QpState::rts) {
        e.executed = true;
        e.status = WcStatus::conn_err;
      } else {
        ++next_send_psn_;
      }
      tx_.push_back(e);
    });
    pump();
  }

  void post_send(Track& track, const WorkRequest& wr) { post_send(track, std::span<const WorkRequest>(&wr, 1)); }

  void post_recv(Track& track, std::span<const WorkRequest> wrs) {
    std::lock_guard lock(fabric().mutex());
    if (rq_.size() + wrs.size() > caps_.max_recv_wr) throw Error(Errc::queue_full, "receive queue full");
    const bool accepting = state_ == QpState::init || state_ == QpState::rtr || state_ == QpState::rts;
    charge_post(track, wrs.size(), [&](std::size_t j, SimTime) {
      if (!accepting) {
        push_completion({wrs[j].wr_id, WcStatus::conn_err, Opcode::recv, 0, qpn_, track.now()});
      } else {
        rq_.push_back({wrs[j], track.now()});
      }
    });
    if (accepting && remote_gid_ && remote_qpn_) {
      if (auto peer = fabric().lookup(*remote_gid_, *remote_qpn_)) peer->pump();
    }
  }

  void post_recv(Track& track, const WorkRequest& wr) { post_recv(track, std::span<const WorkRequest>(&wr, 1)); }

  /// Closes the QP: back to RESET, off the fabric, outstanding work flushed
  /// with CONN_ERR. The passive peer, if any, is told to drop its side.
  void destroy(SimTime at = kEpoch) {
    std::lock_guard lock(fabric().mutex());
    if (destroyed_) return;
    flush_all(at);
    destroyed_ = true;
    state_ = QpState::reset;
    fabric().deregister_endpoint(local_gid_, qpn_);
    if (remote_gid_ && remote_qpn_) fabric().notify_disconnect(*remote_gid_, *remote_qpn_);
    remote_gid_.reset();
    remote_qpn_.reset();
  }

 private:
  struct TxEntry {
    WorkRequest wr;
    std::uint64_t psn = 0;
    SimTime ready{};
    bool executed = false;
    bool blocked = false;
    WcStatus status = WcStatus::ok;
    std::size_t bytes = 0;
  };
  struct RxEntry {
    WorkRequest wr;
    SimTime posted_at{};
  };

  Fabric& fabric() const { return pd_->context().host().fabric(); }

  template <typename F>
  void charge_post(Track& track, std::size_t n, F&& each) {
    const CostModel& costs = pd_->context().host().costs();
    if (pd_->context().path() == DataPath::kernel_mediated) track.charge("syscall", costs.syscall_penalty);
    for (std::size_t j = 0; j < n; ++j) {
      track.charge("post", costs.data_plane_post_cost);
      each(j, track.now() + costs.data_plane_op_cost);
    }
  }

  void push_completion(WorkCompletion wc) {
    wc.ready_at = std::max(wc.ready_at, last_ready_);
    last_ready_ = wc.ready_at;
    cq_->push(wc);
  }

  void flush_all(SimTime at) {
    for (auto& e : tx_) {
      if (!e.executed) {
        e.executed = true;
        e.status = WcStatus::conn_err;
        e.ready = std::max(e.ready, at);
      }
    }
    flush_send_completions();
    for (const auto& r : rq_) push_completion({r.wr.wr_id, WcStatus::conn_err, Opcode::recv, 0, qpn_, at});
    rq_.clear();
  }

  void flush_send_completions() {
    while (!tx_.empty() && tx_.front().executed) {
      const TxEntry& e = tx_.front();
      push_completion({e.wr.wr_id, e.status, e.wr.opcode, e.bytes, qpn_, e.ready});
      tx_.pop_front();
    }
  }

  void pump() {
    if (pumping_) {
      repump_ = true;
      return;
    }
    pumping_ = true;
    do {
      repump_ = false;
      for (std::size_t i = 0; i < tx_.size(); ++i) {
        if (tx_[i].executed) continue;
        if (!execute(i)) break;
      }
      flush_send_completions();
    } while (repump_);
    pumping_ = false;
  }

  // Returns false when the entry must wait for a receive at the peer.
  bool execute(std::size_t index) {
    std::shared_ptr<QueuePair> peer;
    if (state_ == QpState::rts && remote_gid_ && remote_qpn_) peer = fabric().lookup(*remote_gid_, *remote_qpn_);
    if (!peer || peer->destroyed_) {
      tx_[index].executed = true;
      tx_[index].status = WcStatus::conn_err;
      if (state_ == QpState::rts) state_ = QpState::error;
      return true;
    }

    TxEntry& e = tx_[index];
    const WorkRequest& wr = e.wr;
    auto local = pd_->find_lkey(wr.lkey);
    const bool local_ok = local && local->in_bounds(wr.local_offset, wr.length) &&
                          (wr.opcode != Opcode::rdma_read || has(local->access(), Access::local_write));

    WcStatus status = WcStatus::ok;
    switch (wr.opcode) {
      case Opcode::rdma_write:
      case Opcode::rdma_read: {
        const Access need = wr.opcode == Opcode::rdma_write ? Access::remote_write : Access::remote_read;
        auto remote = peer->pd_->find_rkey(wr.rkey);
        if (!local_ok || !remote || !remote->in_bounds(wr.remote_offset, wr.length) || !has(remote->access(), need)) {
          status = WcStatus::protection_err;
          break;
        }
        auto src = wr.opcode == Opcode::rdma_write ? local : remote;
        auto dst = wr.opcode == Opcode::rdma_write ? remote : local;
        const std::size_t src_off = wr.opcode == Opcode::rdma_write ? wr.local_offset : wr.remote_offset;
        const std::size_t dst_off = wr.opcode == Opcode::rdma_write ? wr.remote_offset : wr.local_offset;
        std::memmove(dst->buf_.data() + dst_off, src->buf_.data() + src_off, wr.length);
        break;
      }
      case Opcode::send: {
        if (peer->rq_.empty()) {
          e.blocked = true;
          return false;
        }
        RxEntry recv = peer->rq_.front();
        peer->rq_.pop_front();
        if (e.blocked)
          e.ready = std::max(e.ready, recv.posted_at + pd_->context().host().costs().data_plane_op_cost);
        auto sink = peer->pd_->find_lkey(recv.wr.lkey);
        const bool sink_ok = sink && has(sink->access(), Access::local_write) && wr.length <= recv.wr.length &&
                             sink->in_bounds(recv.wr.local_offset, wr.length);
        if (!local_ok || !sink_ok) {
          status = WcStatus::protection_err;
        } else {
          std::memmove(sink->buf_.data() + recv.wr.local_offset, local->buf_.data() + wr.local_offset, wr.length);
        }
        deliver(*peer, e, status);
        const WorkCompletion rwc{recv.wr.wr_id, status, Opcode::recv, status == WcStatus::ok ? wr.length : 0,
                                 peer->qpn_, e.ready};
        peer->push_completion(rwc);
        if (peer->hook_) peer->hook_(*peer, rwc);
        finish(e, status);
        return true;
      }
      case Opcode::recv:
        status = WcStatus::protection_err;
        break;
    }
    deliver(*peer, e, status);
    finish(e, status);
    return true;
  }

  void deliver(QueuePair& peer, const TxEntry& e, WcStatus status) {
    if (e.psn != peer.expected_recv_psn_) throw std::logic_error("RC sequence violated");
    ++peer.expected_recv_psn_;
    fabric().record({local_gid_, qpn_, peer.local_gid_, peer.qpn_, e.psn, e.wr.opcode, e.wr.wr_id,
                     status == WcStatus::ok ? e.wr.length : 0, status, e.ready});
  }

  static void finish(TxEntry& e, WcStatus status) {
    e.executed = true;
    e.status = status;
    e.bytes = status == WcStatus::ok ? e.wr.length : 0;
  }

  std::shared_ptr<ProtectionDomain> pd_;
  std::shared_ptr<CompletionQueue> cq_;
  std::uint32_t qpn_;
  QpCaps caps_;
  Gid local_gid_;
  QpState state_ = QpState::reset;
  std::optional<Gid> remote_gid_;
  std::optional<std::uint32_t> remote_qpn_;
  std::uint64_t next_send_psn_ = 0;
  std::uint64_t expected_recv_psn_ = 0;
  std::deque<TxEntry> tx_;
  std::deque<RxEntry> rq_;
  SimTime last_ready_{};
  ReceiveHook hook_;
  bool pumping_ = false;
  bool repump_ = false;
  bool destroyed_ = false;
};

inline std::shared_ptr<DeviceContext> Host::open_device(Track& track, std::string_view id,
                                                        std::shared_ptr<cache::CacheDispatch> dispatch, DataPath path) {
  auto it = std::find_if(devices_.begin(), devices_.end(), [&](const DeviceInfo& d) { return d.id == id; });
  if (it == devices_.end()) throw Error(Errc::unknown_device, std::string(id));
  auto values = dispatch->run_chain(api::open_device, track);
  return std::make_shared<DeviceContext>(*this, *it, std::move(dispatch), path, values["open_uverbs_fd"]);
}

inline std::shared_ptr<ProtectionDomain> DeviceContext::alloc_pd(Track& track) {
  require_open();
  auto values = dispatch_->run_chain(api::alloc_pd, track);
  return std::make_shared<ProtectionDomain>(shared_from_this(), values["kernel_alloc_pd"]);
}

inline std::shared_ptr<CompletionQueue> DeviceContext::create_cq(Track& track, std::size_t depth) {
  require_open();
  if (depth == 0) throw Error(Errc::invalid_argument, "cq depth must be > 0");
  dispatch_->run_chain(api::create_cq, track);
  return std::make_shared<CompletionQueue>(host_->fabric_ptr(), depth);
}

inline std::shared_ptr<QueuePair> ProtectionDomain::create_qp(Track& track, std::shared_ptr<CompletionQueue> cq,
                                                              QpCaps caps) {
  ctx_->require_open();
  if (!cq) throw Error(Errc::invalid_argument, "create_qp needs a completion queue");
  std::uint32_t qpn = 0;
  if (ctx_->path() == DataPath::user_space) {
    auto values = ctx_->dispatch().run_chain(api::create_qp, track);
    qpn = static_cast<std::uint32_t>(values["kernel_create_qp"]);
  } else {
    qpn = static_cast<std::uint32_t>(ctx_->host().state().next_qpn.fetch_add(1));
  }
  auto qp = std::make_shared<QueuePair>(shared_from_this(), std::move(cq), qpn, caps);
  ctx_->host().fabric().register_endpoint(qp->local_gid(), qpn, qp);
  return qp;
}

/// Active-side connection: RESET -> INIT, exchange with the listener at
/// `remote`, then RTR -> RTS.
inline ConnectInfo connect_to(Track& track, QueuePair& qp, const Gid& remote) {
  if (qp.state() == QpState::reset) qp.modify(track, {QpState::init, {}, {}});
  const ConnectInfo info = qp.pd().context().host().fabric().request_connection(remote, qp.local_gid(), qp.qpn());
  qp.modify(track, {QpState::rtr, info.gid, info.qpn});
  qp.modify(track, {QpState::rts, {}, {}});
  return info;
}

/// Wires two local QPs to each other; every transition is charged to `track`.
inline void connect_pair(Track& track, QueuePair& a, QueuePair& b) {
  for (QueuePair* qp : {&a, &b})
    if (qp->state() == QpState::reset) qp->modify(track, {QpState::init, {}, {}});
  a.modify(track, {QpState::rtr, b.local_gid(), b.qpn()});
  b.modify(track, {QpState::rtr, a.local_gid(), a.qpn()});
  a.modify(track, {QpState::rts, {}, {}});
  b.modify(track, {QpState::rts, {}, {}});
}

}  // namespace elastic::verbs
