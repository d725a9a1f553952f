#pragma once

#include <atomic>
#include <cstdint>
#include <memory>

#include "elastic/cache/dispatch.hpp"
#include "elastic/core/cost_model.hpp"

namespace elastic::verbs {

/// Static facts about a simulated host that the internal subroutines read.
struct HostEnv {
  // Non-zero only on the legacy CPU family the per-core check looks for.
  std::int64_t legacy_cpu = 0;
  std::int64_t abi_version = 1;
  std::int64_t page_size = 4096;
  std::int64_t port_state = 4;  // active
  std::int64_t gid_index = 3;
  std::int64_t ack_timeout = 14;
  std::int64_t pd_defaults = 0x11;
  std::int64_t qp_defaults = 0x22;
  std::int64_t cq_ops = 0x33;
  std::int64_t device_caps = 0x5a;
};

/// Mutable per-host kernel state behind the subroutines.
struct HostState {
  std::atomic<std::int64_t> next_fd{3};
  std::atomic<std::int64_t> next_handle{1};
  std::atomic<std::int64_t> next_qpn{0x100};
  std::atomic<std::uint64_t> per_core_iterations{0};
  std::atomic<std::uint64_t> per_core_check_calls{0};
};

namespace api {
inline constexpr const char* get_device_list = "get_device_list";
inline constexpr const char* open_device = "open_device";
inline constexpr const char* alloc_pd = "alloc_pd";
inline constexpr const char* reg_mr = "reg_mr";
inline constexpr const char* create_cq = "create_cq";
inline constexpr const char* create_qp = "create_qp";
inline constexpr const char* modify_qp_init = "modify_qp.init";
inline constexpr const char* modify_qp_rtr = "modify_qp.rtr";
inline constexpr const char* modify_qp_rts = "modify_qp.rts";
}  // namespace api

inline constexpr const char* kPerCoreCheck = "per_core_platform_check";

/// Registers the internal subroutine chains of every control-plane call.
/// Costs come from `costs`; a missing name is a config error.
inline cache::FunctionRegistry make_verbs_registry(const CostModel& costs, const HostEnv& env,
                                                   std::shared_ptr<HostState> state) {
  cache::FunctionRegistry reg;
  auto constant = [&](const char* name, const char* api_name, std::int64_t value) {
    reg.add({name, api_name, true, costs.subroutine(name), [value](std::span<const cache::Value>) { return value; }});
  };
  auto kernel = [&](const char* name, const char* api_name, std::function<cache::Value()> fn) {
    reg.add({name, api_name, false, costs.subroutine(name), [fn = std::move(fn)](std::span<const cache::Value>) {
               return fn();
             }});
  };

  kernel("enumerate_sysfs_devices", api::get_device_list, [] { return cache::Value{1}; });
  constant("read_abi_version", api::get_device_list, env.abi_version);

  kernel("open_uverbs_fd", api::open_device, [state] { return state->next_fd.fetch_add(1); });
  // Constant in practice, but it talks to the kernel so it is not declared
  // idempotent and therefore never cached.
  kernel("query_device_caps", api::open_device, [caps = env.device_caps] { return caps; });
  {
    const std::int64_t cores = costs.core_count;
    const std::int64_t legacy = env.legacy_cpu;
    reg.add({kPerCoreCheck, api::open_device, true,
             SubroutineCost{costs.per_core_check_total(), Duration::zero()},
             [state, cores, legacy](std::span<const cache::Value>) {
               state->per_core_check_calls.fetch_add(1);
               std::int64_t found = 0;
               for (std::int64_t core = 0; core < cores; ++core) {
                 state->per_core_iterations.fetch_add(1);
                 found |= legacy;
               }
               return found != 0 ? cache::Value{1} : cache::Value{0};
             }});
  }
  kernel("map_doorbell_page", api::open_device, [state] { return state->next_handle.fetch_add(1); });

  constant("read_pd_defaults", api::alloc_pd, env.pd_defaults);
  kernel("kernel_alloc_pd", api::alloc_pd, [state] { return state->next_handle.fetch_add(1); });

  constant("query_page_size", api::reg_mr, env.page_size);
  kernel("pin_and_register", api::reg_mr, [state] { return state->next_handle.fetch_add(1); });

  constant("load_cq_provider_ops", api::create_cq, env.cq_ops);
  kernel("kernel_create_cq", api::create_cq, [state] { return state->next_handle.fetch_add(1); });

  constant("read_qp_env_defaults", api::create_qp, env.qp_defaults);
  kernel("kernel_create_qp", api::create_qp, [state] { return state->next_qpn.fetch_add(1); });

  constant("query_port_attributes", api::modify_qp_init, env.port_state);
  kernel("kernel_modify_qp_init", api::modify_qp_init, [] { return cache::Value{0}; });
  constant("resolve_gid_index", api::modify_qp_rtr, env.gid_index);
  kernel("kernel_modify_qp_rtr", api::modify_qp_rtr, [] { return cache::Value{0}; });
  constant("read_timeout_defaults", api::modify_qp_rts, env.ack_timeout);
  kernel("kernel_modify_qp_rts", api::modify_qp_rts, [] { return cache::Value{0}; });
  return reg;
}

}  // namespace elastic::verbs
