#pragma once

#include <memory>
#include <string>
#include <vector>

#include "elastic/orchestrator/orchestrator.hpp"
#include "elastic/verbs/responder.hpp"

namespace elastic::testing {

/// A compute host running the orchestrator plus `remotes` passive hosts,
/// each with a responder listening on its first device.
struct Cluster {
  std::shared_ptr<verbs::Fabric> fabric = std::make_shared<verbs::Fabric>();
  CostLedger ledger;
  std::vector<std::unique_ptr<verbs::Host>> hosts;
  std::vector<std::unique_ptr<verbs::Responder>> responders;
  std::unique_ptr<orch::Orchestrator> orch;

  explicit Cluster(orch::OrchestratorConfig config = {}, std::size_t remotes = 2) {
    for (std::size_t i = 0; i < remotes; ++i) {
      const auto index = static_cast<std::uint16_t>(i + 1);
      hosts.push_back(std::make_unique<verbs::Host>(
          fabric, verbs::HostConfig{"remote" + std::to_string(index), index, 1, {}, 100 + i}, config.costs));
      responders.push_back(std::make_unique<verbs::Responder>(*hosts.back()));
    }
    orch = std::make_unique<orch::Orchestrator>(fabric, std::move(config), &ledger);
  }

  ~Cluster() {
    orch.reset();
    responders.clear();
  }

  Gid gid(std::size_t remote = 0) const { return responders.at(remote)->gid(); }

  orch::RequestSpec request(const std::string& user, const std::string& function, orch::LatencyClass latency,
                            std::size_t remote = 0) const {
    return orch::RequestSpec{user, function, gid(remote), latency, {}};
  }
};

inline orch::OrchestratorConfig scheme_config(orch::Scheme scheme) {
  orch::OrchestratorConfig c;
  c.scheme = scheme;
  return c;
}

}  // namespace elastic::testing
