#pragma once

#include <random>
#include <thread>

#include "elastic/fork/process.hpp"
#include "support.hpp"

namespace elastic::testing {

struct IsolationResult {
  bool parent_intact = true;
  bool child_intact = true;
  std::size_t operations = 0;
  Duration plain_fork{};
  Duration rdma_fork{};
};

/// One randomized schedule: a parent holding a 32KB region forks a child;
/// a remote peer then writes and sends into both copies from two concurrent
/// workers while each side also stores locally. Every byte of both regions
/// must match the shadow copy of its own owner.
inline IsolationResult run_isolation_schedule(std::uint64_t seed, const CostModel& costs = CostModel::defaults()) {
  Pair p(verbs::DataPath::user_space, costs, seed);
  fork::ProcessTable procs(fork::ForkCost::from(costs));
  IsolationResult out;

  const int plain = procs.spawn("c");
  Track plain_track;
  procs.fork_process(plain_track, plain);
  out.plain_fork = plain_track.elapsed();

  Track setup;
  const int parent = procs.spawn("c");
  procs.attach(parent, p.ctx_a, p.pd_a);
  auto parent_mr = p.pd_a->reg_mr(setup, 32768, verbs::kAllAccess);
  parent_mr->write(0, pattern(32768, seed));
  procs.add_region(parent, parent_mr);

  Track fork_track;
  const int child = procs.fork_process(fork_track, parent);
  out.rdma_fork = fork_track.elapsed();
  auto child_mr = procs.snapshot(child).regions.at(0);

  struct Side {
    std::shared_ptr<verbs::MemoryRegion> mr;
    std::shared_ptr<verbs::QueuePair> local, remote;
    std::shared_ptr<verbs::CompletionQueue> remote_cq, local_cq;
    std::vector<std::byte> shadow;
  };
  auto make_side = [&](std::shared_ptr<verbs::MemoryRegion> mr) {
    Side s;
    s.mr = mr;
    s.local_cq = p.ctx_a->create_cq(setup, 4096);
    s.remote_cq = p.ctx_b->create_cq(setup, 4096);
    s.local = p.pd_a->create_qp(setup, s.local_cq);
    s.remote = p.pd_b->create_qp(setup, s.remote_cq);
    verbs::connect_pair(setup, *s.local, *s.remote);
    s.shadow = mr->contents();
    return s;
  };
  Side sides[2] = {make_side(parent_mr), make_side(child_mr)};
  auto staging = p.pd_b->reg_mr(setup, 4096, verbs::kAllAccess);
  staging->write(0, pattern(4096, seed ^ 0xabc));
  const auto staged = staging->contents();

  auto worker = [&](Side& s, std::uint64_t wseed) {
    std::mt19937_64 rng(wseed);
    Track t;
    const int ops = 20 + static_cast<int>(rng() % 20);
    for (int i = 0; i < ops; ++i) {
      const std::size_t len = 1 + rng() % 512;
      const std::size_t off = rng() % (32768 - len);
      const std::size_t src = rng() % (4096 - len);
      switch (rng() % 3) {
        case 0: {
          s.remote->post_send(t, verbs::WorkRequest{1, verbs::Opcode::rdma_write, staging->lkey(), src, len,
                                                    s.mr->rkey(), off});
          s.remote_cq->wait(t, 1);
          std::copy(staged.begin() + src, staged.begin() + src + len, s.shadow.begin() + off);
          break;
        }
        case 1: {
          s.local->post_recv(t, verbs::WorkRequest{2, verbs::Opcode::recv, s.mr->lkey(), off, len, 0, 0});
          s.remote->post_send(t, verbs::WorkRequest{3, verbs::Opcode::send, staging->lkey(), src, len, 0, 0});
          s.remote_cq->wait(t, 1);
          s.local_cq->wait(t, 1);
          std::copy(staged.begin() + src, staged.begin() + src + len, s.shadow.begin() + off);
          break;
        }
        default: {
          const auto data = pattern(len, rng());
          s.mr->write(off, data);
          std::copy(data.begin(), data.end(), s.shadow.begin() + off);
          break;
        }
      }
    }
    return static_cast<std::size_t>(ops);
  };

  std::size_t ops[2] = {0, 0};
  std::thread tp([&] { ops[0] = worker(sides[0], seed * 2 + 1); });
  std::thread tc([&] { ops[1] = worker(sides[1], seed * 2 + 2); });
  tp.join();
  tc.join();
  out.operations = ops[0] + ops[1];
  out.parent_intact = parent_mr->contents() == sides[0].shadow;
  out.child_intact = child_mr->contents() == sides[1].shadow;
  return out;
}

}  // namespace elastic::testing
