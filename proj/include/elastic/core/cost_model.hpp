#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "elastic/core/config.hpp"
#include "elastic/core/error.hpp"
#include "elastic/core/time.hpp"

namespace elastic {

struct SubroutineCost {
  Duration user{};
  Duration kernel{};

  Duration total() const { return user + kernel; }
  friend bool operator==(const SubroutineCost&, const SubroutineCost&) = default;
};

/// Microsecond costs for every control-plane subroutine, data-plane
/// operation and lifecycle event the simulator charges.
struct CostModel {
  std::map<std::string, SubroutineCost> subroutines;

  Duration per_core_check_cost_per_core{};
  std::int64_t core_count = 1;

  Duration data_plane_op_cost{};
  Duration data_plane_post_cost{};
  Duration syscall_penalty{};

  Duration container_cold_launch{};
  Duration container_warm_exec{};
  Duration runtime_init{};
  Duration fork_base{};
  Duration copy_on_fork_surcharge{};
  Duration copy_on_fork_per_kb{};
  Duration qp_connect_cost{};

  Duration per_core_check_total() const { return per_core_check_cost_per_core * core_count; }

  SubroutineCost subroutine(const std::string& name) const {
    auto it = subroutines.find(name);
    if (it == subroutines.end()) throw Error(Errc::config, "no cost for subroutine " + name);
    return it->second;
  }

  void validate() const {
    auto non_negative = [](const char* what, Duration d) {
      if (d < Duration::zero()) throw Error(Errc::config, std::string(what) + " must be >= 0");
    };
    for (const auto& [name, c] : subroutines) {
      non_negative(name.c_str(), c.user);
      non_negative(name.c_str(), c.kernel);
    }
    if (core_count < 1) throw Error(Errc::config, "core_count must be >= 1");
    non_negative("per_core_check_cost_per_core", per_core_check_cost_per_core);
    non_negative("data_plane_op_cost", data_plane_op_cost);
    non_negative("data_plane_post_cost", data_plane_post_cost);
    non_negative("syscall_penalty", syscall_penalty);
    non_negative("container_cold_launch", container_cold_launch);
    non_negative("container_warm_exec", container_warm_exec);
    non_negative("runtime_init", runtime_init);
    non_negative("fork_base", fork_base);
    non_negative("copy_on_fork_surcharge", copy_on_fork_surcharge);
    non_negative("copy_on_fork_per_kb", copy_on_fork_per_kb);
    non_negative("qp_connect_cost", qp_connect_cost);
  }

  /// Calibrated defaults; config/default.conf carries the same values.
  static CostModel defaults() {
    CostModel m;
    auto sub = [&m](const char* name, double user_us, double kernel_us) {
      m.subroutines[name] = SubroutineCost{micros(user_us), micros(kernel_us)};
    };
    sub("enumerate_sysfs_devices", 20, 20);
    sub("read_abi_version", 250, 270);
    sub("open_uverbs_fd", 80, 900);
    sub("query_device_caps", 100, 800);
    sub("map_doorbell_page", 50, 250);
    sub("read_pd_defaults", 250, 0);
    sub("kernel_alloc_pd", 10, 30);
    sub("query_page_size", 200, 220);
    sub("pin_and_register", 20, 60);
    sub("load_cq_provider_ops", 495, 215);
    sub("kernel_create_cq", 10, 30);
    sub("read_qp_env_defaults", 300, 40);
    sub("kernel_create_qp", 10, 30);
    sub("query_port_attributes", 250, 100);
    sub("kernel_modify_qp_init", 5, 15);
    sub("resolve_gid_index", 300, 90);
    sub("kernel_modify_qp_rtr", 5, 15);
    sub("read_timeout_defaults", 300, 0);
    sub("kernel_modify_qp_rts", 5, 15);

    m.per_core_check_cost_per_core = micros(518);
    m.core_count = 40;
    m.data_plane_op_cost = micros(1.7);
    m.data_plane_post_cost = micros(0.3);
    m.syscall_penalty = micros(1.333);
    m.container_cold_launch = micros(316600);
    m.container_warm_exec = micros(87600);
    m.runtime_init = micros(1400);
    m.fork_base = micros(1383.86);
    m.copy_on_fork_surcharge = micros(100);
    m.copy_on_fork_per_kb = micros(0);
    m.qp_connect_cost = micros(20);
    return m;
  }

  /// Missing keys keep their default value.
  static CostModel from_config(const Config& cfg) {
    CostModel m = defaults();
    for (const auto& [key, value] : cfg.with_prefix("sub.")) {
      const auto dot = key.rfind('.');
      if (dot == std::string::npos) throw Error(Errc::config, "bad subroutine key sub." + key);
      const std::string name = key.substr(0, dot);
      const std::string part = key.substr(dot + 1);
      auto& cost = m.subroutines[name];
      const Duration d = micros(cfg.get_double("sub." + key));
      if (part == "user_us")
        cost.user = d;
      else if (part == "kernel_us")
        cost.kernel = d;
      else
        throw Error(Errc::config, "bad subroutine key sub." + key);
    }
    auto dur = [&cfg](const char* key, Duration& out) {
      if (cfg.has(key)) out = micros(cfg.get_double(key));
    };
    dur("per_core_check_cost_per_core_us", m.per_core_check_cost_per_core);
    m.core_count = cfg.get_int("core_count", m.core_count);
    dur("data_plane_op_cost_us", m.data_plane_op_cost);
    dur("data_plane_post_cost_us", m.data_plane_post_cost);
    dur("syscall_penalty_us", m.syscall_penalty);
    dur("container_cold_launch_us", m.container_cold_launch);
    dur("container_warm_exec_us", m.container_warm_exec);
    dur("runtime_init_us", m.runtime_init);
    dur("fork_base_us", m.fork_base);
    dur("copy_on_fork_surcharge_us", m.copy_on_fork_surcharge);
    dur("copy_on_fork_per_kb_us", m.copy_on_fork_per_kb);
    dur("qp_connect_cost_us", m.qp_connect_cost);
    m.validate();
    return m;
  }

  static CostModel load(const std::filesystem::path& path) { return from_config(Config::load(path)); }

  friend bool operator==(const CostModel&, const CostModel&) = default;
};

}  // namespace elastic
