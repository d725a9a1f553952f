#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "elastic/verbs/responder.hpp"
#include "elastic/verbs/verbs.hpp"

namespace elastic::testing {

inline std::vector<std::byte> pattern(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::byte> out(n);
  for (auto& b : out) b = static_cast<std::byte>(rng() & 0xff);
  return out;
}

inline std::vector<std::byte> bytes_of(const std::string& s) {
  std::vector<std::byte> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = static_cast<std::byte>(s[i]);
  return out;
}

/// Two hosts on one fabric with a ready protection domain on each side.
struct Pair {
  std::shared_ptr<verbs::Fabric> fabric = std::make_shared<verbs::Fabric>();
  std::unique_ptr<verbs::Host> a;
  std::unique_ptr<verbs::Host> b;
  std::shared_ptr<verbs::DeviceContext> ctx_a, ctx_b;
  std::shared_ptr<verbs::ProtectionDomain> pd_a, pd_b;
  std::shared_ptr<verbs::CompletionQueue> cq_a, cq_b;

  explicit Pair(verbs::DataPath path = verbs::DataPath::user_space, CostModel costs = CostModel::defaults(),
                std::uint64_t seed = 1) {
    a = std::make_unique<verbs::Host>(fabric, verbs::HostConfig{"a", 0, 1, {}, seed}, costs);
    b = std::make_unique<verbs::Host>(fabric, verbs::HostConfig{"b", 1, 1, {}, seed + 1}, costs);
    Track t;
    ctx_a = a->open_device(t, "dev0", a->uncached_dispatch(), path);
    ctx_b = b->open_device(t, "dev0", b->uncached_dispatch(), path);
    pd_a = ctx_a->alloc_pd(t);
    pd_b = ctx_b->alloc_pd(t);
    cq_a = ctx_a->create_cq(t, 4096);
    cq_b = ctx_b->create_cq(t, 4096);
  }

  std::pair<std::shared_ptr<verbs::QueuePair>, std::shared_ptr<verbs::QueuePair>> connected(
      verbs::QpCaps caps = {}) {
    Track t;
    auto qa = pd_a->create_qp(t, cq_a, caps);
    auto qb = pd_b->create_qp(t, cq_b, caps);
    verbs::connect_pair(t, *qa, *qb);
    return {qa, qb};
  }
};

}  // namespace elastic::testing
