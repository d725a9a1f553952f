#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "elastic/core/error.hpp"
#include "elastic/core/gid.hpp"
#include "elastic/core/time.hpp"
#include "elastic/verbs/verbs.hpp"

namespace elastic::orch {

enum class LatencyClass { normal, fast };

struct RequestSpec {
  std::string user;
  std::string function;
  Gid destination;
  LatencyClass latency = LatencyClass::normal;
  std::vector<std::byte> payload;
};

/// What a handler sees: the shared PD, its own region and the QPs it was
/// assigned, plus the passive side's region for one-sided access.
struct FunctionContext {
  std::shared_ptr<verbs::ProtectionDomain> pd;
  std::shared_ptr<verbs::MemoryRegion> mr;
  std::vector<std::shared_ptr<verbs::QueuePair>> qps;
  std::vector<std::size_t> qp_ids;
  std::vector<verbs::ConnectInfo> remotes;
  Track* track = nullptr;
};

using Handler = std::function<std::string(const RequestSpec& event, FunctionContext& context)>;

namespace handlers {

inline std::vector<std::byte> payload_or_default(const RequestSpec& event) {
  if (!event.payload.empty()) return event.payload;
  std::vector<std::byte> out(64);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::byte>(i);
  return out;
}

inline void require_rdma(const FunctionContext& ctx) {
  if (!ctx.mr || ctx.qps.empty() || ctx.track == nullptr)
    throw Error(Errc::invalid_argument, "handler needs a region and at least one qp");
}

inline verbs::WorkCompletion complete_one(FunctionContext& ctx, verbs::QueuePair& qp) {
  auto wcs = qp.cq()->wait(*ctx.track, 1);
  if (wcs.empty()) throw Error(Errc::invalid_argument, "no completion");
  if (wcs[0].status != verbs::WcStatus::ok)
    throw Error(Errc::invalid_argument, "completion status " + std::string(verbs::to_string(wcs[0].status)));
  return wcs[0];
}

inline std::string noop(const RequestSpec&, FunctionContext&) { return "ok"; }

/// Two-sided: SENDs the payload to the destination.
inline std::string echo(const RequestSpec& event, FunctionContext& ctx) {
  require_rdma(ctx);
  const auto data = payload_or_default(event);
  if (data.size() > ctx.mr->length()) throw Error(Errc::invalid_argument, "payload larger than region");
  ctx.mr->write(0, data);
  auto& qp = *ctx.qps[0];
  qp.post_send(*ctx.track, verbs::WorkRequest{1, verbs::Opcode::send, ctx.mr->lkey(), 0, data.size(), 0, 0});
  const auto wc = complete_one(ctx, qp);
  return "sent " + std::to_string(wc.byte_len);
}

/// One-sided: READs payload-size bytes (64 by default) from offset 0 of the
/// destination's region.
inline std::string kv_read(const RequestSpec& event, FunctionContext& ctx) {
  require_rdma(ctx);
  if (ctx.remotes.empty()) throw Error(Errc::invalid_argument, "kv-read needs the remote region");
  const std::size_t n = event.payload.empty() ? 64 : event.payload.size();
  auto& qp = *ctx.qps[0];
  qp.post_send(*ctx.track,
               verbs::WorkRequest{2, verbs::Opcode::rdma_read, ctx.mr->lkey(), 0, n, ctx.remotes[0].rkey, 0});
  complete_one(ctx, qp);
  std::ostringstream hex;
  hex << std::hex;
  for (std::byte b : ctx.mr->read(0, n)) hex << (static_cast<unsigned>(b) >> 4) << (static_cast<unsigned>(b) & 0xf);
  return hex.str();
}

inline const std::map<std::string, Handler>& builtins() {
  static const std::map<std::string, Handler> table{{"noop", noop}, {"echo", echo}, {"kv-read", kv_read}};
  return table;
}

}  // namespace handlers
}  // namespace elastic::orch
