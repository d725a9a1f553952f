#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "elastic/core/error.hpp"
#include "elastic/core/gid.hpp"
#include "elastic/verbs/verbs.hpp"

namespace elastic::orch {

/// One Assignment Table row. `destination` is kept across releases so an
/// established connection can be reused.
struct Assignment {
  std::optional<int> pid;
  std::optional<Gid> destination;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

/// Picks up to `count` unassigned rows for `destination`: rows already
/// connected there first (ascending index), then the lowest-index remaining
/// unassigned rows. Returns fewer than `count` when the table runs dry.
inline std::vector<std::size_t> select_qps(std::span<const Assignment> table, const Gid& destination,
                                           std::size_t count) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < table.size() && out.size() < count; ++i)
    if (!table[i].pid && table[i].destination == destination) out.push_back(i);
  for (std::size_t i = 0; i < table.size() && out.size() < count; ++i)
    if (!table[i].pid && table[i].destination != destination) out.push_back(i);
  return out;
}

namespace detail {
inline void check_writer(int owner, int writer, const char* table) {
  if (owner != writer)
    throw Error(Errc::ownership, std::string(table) + " owned by " + std::to_string(owner) + ", written by " +
                                     std::to_string(writer));
}
}  // namespace detail

/// QP objects of one INIT process; the vector index is the QP id.
class QpTable {
 public:
  explicit QpTable(int owner) : owner_(owner) {}

  int owner() const { return owner_; }
  std::size_t size() const { return qps_.size(); }
  const std::shared_ptr<verbs::QueuePair>& at(std::size_t id) const { return qps_.at(id); }
  const std::vector<std::shared_ptr<verbs::QueuePair>>& entries() const { return qps_; }

  std::size_t push(int writer, std::shared_ptr<verbs::QueuePair> qp) {
    detail::check_writer(owner_, writer, "QpTable");
    qps_.push_back(std::move(qp));
    return qps_.size() - 1;
  }

  void replace(int writer, std::size_t id, std::shared_ptr<verbs::QueuePair> qp) {
    detail::check_writer(owner_, writer, "QpTable");
    qps_.at(id) = std::move(qp);
  }

  void clear(int writer) {
    detail::check_writer(owner_, writer, "QpTable");
    qps_.clear();
  }

 private:
  int owner_;
  std::vector<std::shared_ptr<verbs::QueuePair>> qps_;
};

class AssignmentTable {
 public:
  explicit AssignmentTable(int owner) : owner_(owner) {}

  int owner() const { return owner_; }
  std::size_t size() const { return rows_.size(); }
  const Assignment& at(std::size_t id) const { return rows_.at(id); }
  std::span<const Assignment> entries() const { return rows_; }

  std::size_t append(int writer) {
    detail::check_writer(owner_, writer, "AssignmentTable");
    rows_.emplace_back();
    return rows_.size() - 1;
  }

  void assign(int writer, std::size_t id, int pid) {
    detail::check_writer(owner_, writer, "AssignmentTable");
    Assignment& row = rows_.at(id);
    if (row.pid) throw Error(Errc::ownership, "qp " + std::to_string(id) + " already assigned");
    row.pid = pid;
  }

  void set_destination(int writer, std::size_t id, std::optional<Gid> destination) {
    detail::check_writer(owner_, writer, "AssignmentTable");
    rows_.at(id).destination = std::move(destination);
  }

  /// Clears `pid` from every row; returns how many rows it held.
  std::size_t release(int writer, int pid) {
    detail::check_writer(owner_, writer, "AssignmentTable");
    std::size_t n = 0;
    for (auto& row : rows_) {
      if (row.pid == pid) {
        row.pid.reset();
        ++n;
      }
    }
    return n;
  }

  void clear(int writer) {
    detail::check_writer(owner_, writer, "AssignmentTable");
    rows_.clear();
  }

  std::size_t unassigned() const {
    return static_cast<std::size_t>(std::count_if(rows_.begin(), rows_.end(), [](const Assignment& a) { return !a.pid; }));
  }

  std::size_t unassigned_to(const Gid& destination) const {
    return static_cast<std::size_t>(std::count_if(
        rows_.begin(), rows_.end(), [&](const Assignment& a) { return !a.pid && a.destination == destination; }));
  }

 private:
  int owner_;
  std::vector<Assignment> rows_;
};

struct Connection {
  int init_pid = 0;
  std::size_t qp_id = 0;
  Gid destination;

  friend bool operator==(const Connection&, const Connection&) = default;
};

struct ContainerRecord {
  std::string id;
  std::string user;
  std::string function;
  std::vector<int> init_pids;
  std::vector<Connection> connections;
};

/// Scheduler-owned map of live containers.
class OrchestratorTable {
 public:
  static constexpr int kScheduler = 0;

  const ContainerRecord& add(int writer, ContainerRecord record) {
    detail::check_writer(kScheduler, writer, "OrchestratorTable");
    if (find(record.user, record.function))
      throw Error(Errc::invalid_argument, "container already exists for " + record.user + "/" + record.function);
    const std::string id = record.id;
    return records_.emplace(id, std::move(record)).first->second;
  }

  std::optional<std::string> find(const std::string& user, const std::string& function) const {
    for (const auto& [id, r] : records_)
      if (r.user == user && r.function == function) return id;
    return std::nullopt;
  }

  bool contains(const std::string& id) const { return records_.count(id) != 0; }

  const ContainerRecord& get(const std::string& id) const {
    auto it = records_.find(id);
    if (it == records_.end()) throw Error(Errc::unknown_container, id);
    return it->second;
  }

  void add_init(int writer, const std::string& id, int pid) {
    detail::check_writer(kScheduler, writer, "OrchestratorTable");
    mutable_get(id).init_pids.push_back(pid);
  }

  void record_connection(int writer, const std::string& id, Connection c) {
    detail::check_writer(kScheduler, writer, "OrchestratorTable");
    auto& conns = mutable_get(id).connections;
    auto it = std::find_if(conns.begin(), conns.end(), [&](const Connection& x) {
      return x.init_pid == c.init_pid && x.qp_id == c.qp_id;
    });
    if (it == conns.end())
      conns.push_back(std::move(c));
    else
      *it = std::move(c);
  }

  void remove(int writer, const std::string& id) {
    detail::check_writer(kScheduler, writer, "OrchestratorTable");
    if (records_.erase(id) == 0) throw Error(Errc::unknown_container, id);
  }

  const std::map<std::string, ContainerRecord>& records() const { return records_; }

 private:
  ContainerRecord& mutable_get(const std::string& id) {
    auto it = records_.find(id);
    if (it == records_.end()) throw Error(Errc::unknown_container, id);
    return it->second;
  }

  std::map<std::string, ContainerRecord> records_;
};

}  // namespace elastic::orch
