#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "elastic/core/cost_model.hpp"
#include "elastic/core/error.hpp"
#include "elastic/core/time.hpp"
#include "elastic/verbs/verbs.hpp"

namespace elastic::fork {

struct ForkCost {
  Duration base{};
  Duration surcharge{};
  Duration per_kb{};

  static ForkCost from(const CostModel& m) { return {m.fork_base, m.copy_on_fork_surcharge, m.copy_on_fork_per_kb}; }
};

struct LogicalProcess {
  int pid = 0;
  std::optional<int> parent;
  std::string container;
  bool alive = true;
  // Shared by reference with the parent after a fork.
  std::shared_ptr<verbs::DeviceContext> context;
  std::shared_ptr<verbs::ProtectionDomain> pd;
  // Private to this process; a fork copies them.
  std::vector<std::shared_ptr<verbs::MemoryRegion>> regions;
  std::size_t established_qps = 0;
  std::vector<std::size_t> qp_ids;

  bool holds_rdma() const { return !regions.empty() || established_qps > 0; }

  std::size_t region_bytes() const {
    std::size_t n = 0;
    for (const auto& r : regions) n += r->length();
    return n;
  }
};

/// Logical processes of one host with copy-on-fork RDMA semantics.
class ProcessTable {
 public:
  using ExitHook = std::function<void(const LogicalProcess&)>;

  explicit ProcessTable(ForkCost cost) : cost_(cost) {}

  void set_exit_hook(ExitHook hook) {
    std::lock_guard lock(mu_);
    exit_hook_ = std::move(hook);
  }

  int spawn(std::string container = {}) {
    std::lock_guard lock(mu_);
    const int pid = next_pid_++;
    LogicalProcess proc;
    proc.pid = pid;
    proc.container = std::move(container);
    procs_[pid] = std::move(proc);
    return pid;
  }

  bool exists(int pid) const {
    std::lock_guard lock(mu_);
    return procs_.count(pid) != 0;
  }

  bool alive(int pid) const {
    std::lock_guard lock(mu_);
    auto it = procs_.find(pid);
    return it != procs_.end() && it->second.alive;
  }

  LogicalProcess snapshot(int pid) const {
    std::lock_guard lock(mu_);
    return find(pid);
  }

  /// Mutable access for the owning actor.
  template <typename F>
  void update(int pid, F&& f) {
    std::lock_guard lock(mu_);
    f(find(pid));
  }

  void attach(int pid, std::shared_ptr<verbs::DeviceContext> ctx, std::shared_ptr<verbs::ProtectionDomain> pd) {
    update(pid, [&](LogicalProcess& p) {
      p.context = std::move(ctx);
      p.pd = std::move(pd);
    });
  }

  void add_region(int pid, std::shared_ptr<verbs::MemoryRegion> mr) {
    update(pid, [&](LogicalProcess& p) { p.regions.push_back(std::move(mr)); });
  }

  std::vector<int> live_children(int pid) const {
    std::lock_guard lock(mu_);
    std::vector<int> out;
    for (const auto& [id, p] : procs_)
      if (p.alive && p.parent == pid) out.push_back(id);
    return out;
  }

  std::vector<int> live_pids() const {
    std::lock_guard lock(mu_);
    std::vector<int> out;
    for (const auto& [id, p] : procs_)
      if (p.alive) out.push_back(id);
    return out;
  }

  Duration fork_cost(const LogicalProcess& parent, bool inherit_rdma) const {
    Duration d = cost_.base;
    if (inherit_rdma && parent.holds_rdma()) d += surcharge_for(parent);
    return d;
  }

  /// Forks `parent`. With `inherit_rdma` the child shares context and PD and
  /// gets private copies of every region; otherwise it starts RDMA-free.
  int fork_process(Track& track, int parent_pid, bool inherit_rdma = true) {
    std::lock_guard lock(mu_);
    LogicalProcess& parent = find(parent_pid);
    if (!parent.alive) throw Error(Errc::dead_process, "fork of dead pid " + std::to_string(parent_pid));
    track.charge("fork", cost_.base);
    LogicalProcess child;
    child.pid = next_pid_++;
    child.parent = parent_pid;
    child.container = parent.container;
    if (inherit_rdma) {
      if (parent.holds_rdma()) track.charge("copy_on_fork", surcharge_for(parent));
      child.context = parent.context;
      child.pd = parent.pd;
      for (const auto& mr : parent.regions) {
        auto pd = mr->pd_ptr();
        if (!pd) throw Error(Errc::closed_context, "region outlived its protection domain");
        child.regions.push_back(pd->register_fork_copy(*mr));
      }
    }
    const int pid = child.pid;
    procs_[pid] = std::move(child);
    return pid;
  }

  void exit_process(int pid) {
    LogicalProcess gone;
    ExitHook hook;
    {
      std::lock_guard lock(mu_);
      LogicalProcess& p = find(pid);
      if (!p.alive) throw Error(Errc::dead_process, "pid " + std::to_string(pid) + " already exited");
      for (const auto& [id, other] : procs_)
        if (other.alive && other.parent == pid)
          throw Error(Errc::lifecycle, "pid " + std::to_string(pid) + " has live children");
      retire(p);
      gone = p;
      hook = exit_hook_;
    }
    if (hook) hook(gone);
  }

  /// Container teardown: marks the process dead without lifecycle checks or
  /// exit notification.
  void kill(int pid) {
    std::lock_guard lock(mu_);
    LogicalProcess& p = find(pid);
    if (p.alive) retire(p);
  }

 private:
  Duration surcharge_for(const LogicalProcess& parent) const {
    const double kb = static_cast<double>(parent.region_bytes()) / 1024.0;
    return cost_.surcharge + Duration{static_cast<std::int64_t>(std::llround(kb * cost_.per_kb.count()))};
  }

  static void retire(LogicalProcess& p) {
    p.alive = false;
    if (p.parent) {
      for (auto& mr : p.regions)
        if (auto pd = mr->pd_ptr()) pd->deregister(*mr);
    }
    p.regions.clear();
    p.qp_ids.clear();
  }

  LogicalProcess& find(int pid) {
    auto it = procs_.find(pid);
    if (it == procs_.end()) throw Error(Errc::unknown_pid, "unknown pid " + std::to_string(pid));
    return it->second;
  }
  const LogicalProcess& find(int pid) const {
    auto it = procs_.find(pid);
    if (it == procs_.end()) throw Error(Errc::unknown_pid, "unknown pid " + std::to_string(pid));
    return it->second;
  }

  ForkCost cost_;
  mutable std::mutex mu_;
  std::map<int, LogicalProcess> procs_;
  ExitHook exit_hook_;
  int next_pid_ = 100;
};

}  // namespace elastic::fork
