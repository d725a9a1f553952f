#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "elastic/core/gid.hpp"
#include "elastic/core/time.hpp"

namespace elastic::verbs {

enum class Access : unsigned {
  none = 0,
  local_write = 1u << 0,
  remote_read = 1u << 1,
  remote_write = 1u << 2,
};

constexpr Access operator|(Access a, Access b) {
  return static_cast<Access>(static_cast<unsigned>(a) | static_cast<unsigned>(b));
}
constexpr bool has(Access set, Access flag) {
  return (static_cast<unsigned>(set) & static_cast<unsigned>(flag)) == static_cast<unsigned>(flag);
}

inline constexpr Access kAllAccess = Access::local_write | Access::remote_read | Access::remote_write;

enum class QpState { reset, init, rtr, rts, error };

constexpr std::string_view to_string(QpState s) {
  switch (s) {
    case QpState::reset: return "RESET";
    case QpState::init: return "INIT";
    case QpState::rtr: return "RTR";
    case QpState::rts: return "RTS";
    case QpState::error: return "ERROR";
  }
  return "?";
}

enum class Transport { rc };

enum class Opcode { send, recv, rdma_read, rdma_write };

enum class WcStatus { ok, protection_err, conn_err };

constexpr std::string_view to_string(WcStatus s) {
  switch (s) {
    case WcStatus::ok: return "OK";
    case WcStatus::protection_err: return "PROTECTION_ERR";
    case WcStatus::conn_err: return "CONN_ERR";
  }
  return "?";
}

/// User-space verbs bypass the kernel on the data path; the kernel-mediated
/// path pays a syscall per post call and skips user-space QP setup.
enum class DataPath { user_space, kernel_mediated };

struct WorkRequest {
  std::uint64_t wr_id = 0;
  Opcode opcode = Opcode::send;
  std::uint32_t lkey = 0;
  std::size_t local_offset = 0;
  std::size_t length = 0;
  std::uint32_t rkey = 0;  // one-sided only
  std::size_t remote_offset = 0;
};

struct WorkCompletion {
  std::uint64_t wr_id = 0;
  WcStatus status = WcStatus::ok;
  Opcode opcode = Opcode::send;
  std::size_t byte_len = 0;
  std::uint32_t qp_num = 0;
  SimTime ready_at{};
};

struct QpAttr {
  QpState target = QpState::init;
  std::optional<Gid> remote_gid;
  std::optional<std::uint32_t> remote_qpn;
};

struct QpCaps {
  std::size_t max_send_wr = 128;
  std::size_t max_recv_wr = 128;
};

/// One executed request as seen by the fabric.
struct DeliveryRecord {
  Gid src;
  std::uint32_t src_qpn = 0;
  Gid dst;
  std::uint32_t dst_qpn = 0;
  std::uint64_t psn = 0;
  Opcode opcode = Opcode::send;
  std::uint64_t wr_id = 0;
  std::size_t bytes = 0;
  WcStatus status = WcStatus::ok;
  SimTime at{};
};

/// What the passive side returns during connection exchange.
struct ConnectInfo {
  Gid gid;
  std::uint32_t qpn = 0;
  std::uint32_t rkey = 0;
  std::size_t region_length = 0;
};

}  // namespace elastic::verbs
