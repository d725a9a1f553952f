#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "elastic/verbs/verbs.hpp"

namespace elastic::verbs {

/// Passive endpoint on a server host. Each accepted connection gets its own
/// RC QP; all connections share one remotely accessible region, and every
/// received SEND is logged and its receive slot re-posted immediately.
class Responder : public Acceptor {
 public:
  struct Options {
    std::string device = "dev0";
    std::size_t region_bytes = 32768;
    std::size_t recv_slots = 16;
    std::size_t slot_bytes = 32768;
  };

  explicit Responder(Host& host) : Responder(host, Options{}) {}

  Responder(Host& host, Options options) : host_(&host), options_(std::move(options)) {
    Track setup;
    ctx_ = host.open_device(setup, options_.device, host.uncached_dispatch());
    pd_ = ctx_->alloc_pd(setup);
    cq_ = ctx_->create_cq(setup, 1u << 20);
    region_ = pd_->reg_mr(setup, options_.region_bytes, kAllAccess);
    host.fabric().add_acceptor(ctx_->gid(), this);
  }

  Responder(const Responder&) = delete;
  Responder& operator=(const Responder&) = delete;

  ~Responder() override {
    std::lock_guard lock(host_->fabric().mutex());
    host_->fabric().remove_acceptor(ctx_->gid());
    for (auto& [_, conn] : conns_) conn.qp->destroy();
  }

  const Gid& gid() const { return ctx_->gid(); }
  MemoryRegion& region() const { return *region_; }
  ProtectionDomain& pd() const { return *pd_; }

  ConnectInfo accept(const Gid& peer_gid, std::uint32_t peer_qpn) override {
    std::lock_guard lock(host_->fabric().mutex());
    Track setup;
    Connection conn;
    conn.qp = pd_->create_qp(setup, cq_, QpCaps{128, std::max<std::size_t>(options_.recv_slots, 1)});
    conn.slots = pd_->reg_mr(setup, options_.recv_slots * options_.slot_bytes, Access::local_write);
    conn.qp->modify(setup, {QpState::init, {}, {}});
    conn.qp->modify(setup, {QpState::rtr, peer_gid, peer_qpn});
    conn.qp->modify(setup, {QpState::rts, {}, {}});
    for (std::size_t i = 0; i < options_.recv_slots; ++i) conn.qp->post_recv(setup, slot_request(conn, i));
    conn.qp->set_receive_hook([this](QueuePair& qp, const WorkCompletion& wc) { on_receive(qp, wc); });
    const std::uint32_t qpn = conn.qp->qpn();
    conns_.emplace(qpn, std::move(conn));
    return {ctx_->gid(), qpn, region_->rkey(), region_->length()};
  }

  void disconnect(std::uint32_t local_qpn) override {
    std::lock_guard lock(host_->fabric().mutex());
    auto it = conns_.find(local_qpn);
    if (it == conns_.end()) return;
    auto conn = std::move(it->second);
    conns_.erase(it);
    conn.qp->destroy();
  }

  std::size_t connection_count() const {
    std::lock_guard lock(host_->fabric().mutex());
    return conns_.size();
  }

  std::vector<std::vector<std::byte>> received() const {
    std::lock_guard lock(host_->fabric().mutex());
    return received_;
  }

  void clear_received() {
    std::lock_guard lock(host_->fabric().mutex());
    received_.clear();
  }

 private:
  struct Connection {
    std::shared_ptr<QueuePair> qp;
    std::shared_ptr<MemoryRegion> slots;
  };

  WorkRequest slot_request(const Connection& conn, std::size_t slot) const {
    return {slot, Opcode::recv, conn.slots->lkey(), slot * options_.slot_bytes, options_.slot_bytes, 0, 0};
  }

  void on_receive(QueuePair& qp, const WorkCompletion& wc) {
    cq_->drain();
    auto it = conns_.find(qp.qpn());
    if (it == conns_.end()) return;
    const std::size_t slot = static_cast<std::size_t>(wc.wr_id);
    if (wc.status == WcStatus::ok) received_.push_back(it->second.slots->read(slot * options_.slot_bytes, wc.byte_len));
    if (qp.state() != QpState::rts) return;
    Track t(wc.ready_at);
    qp.post_recv(t, slot_request(it->second, slot));
  }

  Host* host_;
  Options options_;
  std::shared_ptr<DeviceContext> ctx_;
  std::shared_ptr<ProtectionDomain> pd_;
  std::shared_ptr<CompletionQueue> cq_;
  std::shared_ptr<MemoryRegion> region_;
  std::map<std::uint32_t, Connection> conns_;
  std::vector<std::vector<std::byte>> received_;
};

}  // namespace elastic::verbs
