#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "elastic/cache/dispatch.hpp"
#include "elastic/core/error.hpp"
#include "elastic/core/time.hpp"

namespace elastic::cache {

/// Verbs calls the profiler may exercise.
enum class ApiCall { get_device_list, open_device, alloc_pd, reg_mr, create_cq, create_qp, modify_qp };

using ApiSet = std::vector<ApiCall>;

inline const ApiSet& all_api_calls() {
  static const ApiSet all{ApiCall::get_device_list, ApiCall::open_device, ApiCall::alloc_pd, ApiCall::reg_mr,
                          ApiCall::create_cq,       ApiCall::create_qp,   ApiCall::modify_qp};
  return all;
}

inline std::string_view to_string(ApiCall c) {
  switch (c) {
    case ApiCall::get_device_list: return "get_device_list";
    case ApiCall::open_device: return "open_device";
    case ApiCall::alloc_pd: return "alloc_pd";
    case ApiCall::reg_mr: return "reg_mr";
    case ApiCall::create_cq: return "create_cq";
    case ApiCall::create_qp: return "create_qp";
    case ApiCall::modify_qp: return "modify_qp";
  }
  return "?";
}

/// Subroutine chains a call runs; modify_qp walks INIT, RTR and RTS.
inline std::vector<std::string> chains_for(ApiCall c) {
  if (c == ApiCall::modify_qp) return {"modify_qp.init", "modify_qp.rtr", "modify_qp.rts"};
  return {std::string(to_string(c))};
}

struct ProfileOptions {
  std::size_t min_calls = 8;
  std::size_t min_orderings = 4;
  std::size_t min_sequence = 4;
  std::size_t max_sequence = 16;
};

struct FunctionProfile {
  std::map<Value, std::size_t> returns;  // value -> times observed
  std::size_t calls = 0;
  std::size_t errors = 0;
  std::set<std::uint64_t> orderings;
  bool constant = false;
};

struct ProfileReport {
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::map<std::string, FunctionProfile> functions;

  bool is_constant(const std::string& name) const {
    auto it = functions.find(name);
    return it != functions.end() && it->second.constant;
  }

  std::vector<std::string> constant_functions() const {
    std::vector<std::string> out;
    for (const auto& [name, f] : functions)
      if (f.constant) out.push_back(name);
    return out;
  }

  /// Stable text form; equal reports serialize to identical bytes.
  std::string serialize() const {
    std::ostringstream out;
    out << "seed = " << seed << "\ntrials = " << trials << "\n";
    for (const auto& [name, f] : functions) {
      out << "function." << name << ".calls = " << f.calls << "\n";
      out << "function." << name << ".errors = " << f.errors << "\n";
      out << "function." << name << ".orderings = " << f.orderings.size() << "\n";
      out << "function." << name << ".constant = " << (f.constant ? 1 : 0) << "\n";
      out << "function." << name << ".returns =";
      for (const auto& [v, n] : f.returns) out << " " << v << "x" << n;
      out << "\n";
    }
    return out.str();
  }
};

namespace detail {

inline std::vector<ApiCall> random_sequence(std::mt19937_64& rng, const ApiSet& apis, const ProfileOptions& opt) {
  std::uniform_int_distribution<std::size_t> len(opt.min_sequence, std::max(opt.min_sequence, opt.max_sequence));
  std::uniform_int_distribution<std::size_t> pick(0, apis.size() - 1);
  std::vector<ApiCall> seq(len(rng));
  for (auto& c : seq) c = apis[pick(rng)];
  return seq;
}

inline std::uint64_t ordering_id(const std::vector<ApiCall>& seq) {
  std::uint64_t h = 1469598103934665603ull;
  for (ApiCall c : seq) {
    h ^= static_cast<std::uint64_t>(c) + 1;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

/// Runs `trials` random combinations and orders of the calls in `apis`
/// through an uncached dispatch and records every subroutine's returns.
inline ProfileReport profile(const FunctionRegistry& registry, const ApiSet& apis, std::size_t trials,
                             std::uint64_t seed, const ProfileOptions& options = {}) {
  if (apis.empty()) throw Error(Errc::invalid_argument, "profile needs at least one api");
  if (trials == 0) throw Error(Errc::invalid_argument, "profile needs at least one trial");
  ProfileReport report;
  report.seed = seed;
  report.trials = trials;
  std::mt19937_64 rng(seed);
  CacheDispatch dispatch(registry);
  Track scratch;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const auto seq = detail::random_sequence(rng, apis, options);
    const std::uint64_t ordering = detail::ordering_id(seq);
    for (ApiCall call : seq) {
      for (const auto& chain : chains_for(call)) {
        for (const FunctionSpec* spec : registry.chain(chain)) {
          FunctionProfile& f = report.functions[spec->name];
          ++f.calls;
          f.orderings.insert(ordering);
          try {
            ++f.returns[dispatch.call(spec->name, {}, scratch)];
          } catch (const Error&) {
            ++f.errors;
          }
        }
      }
    }
  }
  for (auto& [_, f] : report.functions)
    f.constant = f.errors == 0 && f.returns.size() == 1 && f.calls >= options.min_calls &&
                 f.orderings.size() >= options.min_orderings;
  return report;
}

/// Entries eligible for caching: observed constant and declared idempotent.
inline std::map<std::string, Value> cacheable_entries(const ProfileReport& report, const FunctionRegistry& registry) {
  std::map<std::string, Value> out;
  for (const auto& [name, f] : report.functions) {
    if (!f.constant || !registry.contains(name) || !registry.at(name).declared_idempotent) continue;
    out[name] = f.returns.begin()->first;
  }
  return out;
}

/// Installs the eligible entries into `map` as a new generation.
inline void build_cache(const ProfileReport& report, const FunctionRegistry& registry, CacheMap& map) {
  map.install(cacheable_entries(report, registry));
}

inline std::shared_ptr<CacheMap> build_cache(const ProfileReport& report, const FunctionRegistry& registry) {
  auto map = std::make_shared<CacheMap>();
  build_cache(report, registry, *map);
  return map;
}

/// A replayable stream of subroutine calls.
struct Workload {
  std::vector<std::string> calls;
};

inline Workload make_workload(const FunctionRegistry& registry, const ApiSet& apis, std::size_t calls,
                              std::uint64_t seed, const ProfileOptions& options = {}) {
  if (apis.empty()) throw Error(Errc::invalid_argument, "workload needs at least one api");
  std::mt19937_64 rng(seed);
  Workload w;
  while (w.calls.size() < calls) {
    const std::size_t before = w.calls.size();
    for (ApiCall call : detail::random_sequence(rng, apis, options))
      for (const auto& chain : chains_for(call))
        for (const FunctionSpec* spec : registry.chain(chain))
          if (w.calls.size() < calls) w.calls.push_back(spec->name);
    if (w.calls.size() == before) break;
  }
  return w;
}

struct VerifyResult {
  bool ok = true;
  std::size_t calls = 0;
  std::size_t mismatches = 0;
  std::vector<std::string> mismatched;
};

using RegistryFactory = std::function<FunctionRegistry()>;

/// Replays `workload` through a cached dispatch and an uncached one, each on
/// a fresh registry from `factory`, and compares every return value.
inline VerifyResult verify_cache(const RegistryFactory& factory, std::shared_ptr<CacheMap> cache,
                                 const Workload& workload) {
  const FunctionRegistry cached_reg = factory();
  const FunctionRegistry plain_reg = factory();
  CacheDispatch cached(cached_reg, std::move(cache));
  CacheDispatch plain(plain_reg);
  Track t1, t2;
  VerifyResult r;
  for (const auto& name : workload.calls) {
    ++r.calls;
    if (cached.call(name, {}, t1) != plain.call(name, {}, t2)) {
      ++r.mismatches;
      r.mismatched.push_back(name);
    }
  }
  r.ok = r.mismatches == 0;
  return r;
}

/// Keeps one host's cache map fresh: error-triggered invalidation plus
/// periodic and pending re-profiles.
class CacheManager {
 public:
  struct Options {
    ApiSet apis = all_api_calls();
    std::size_t trials = 16;
    std::uint64_t seed = 1;
    std::optional<Duration> period;
    ProfileOptions profile;
  };

  CacheManager(const FunctionRegistry& registry, std::shared_ptr<CacheMap> map, Options options)
      : registry_(&registry), map_(std::move(map)), options_(std::move(options)) {}

  const std::shared_ptr<CacheMap>& map() const { return map_; }

  ProfileReport reprofile(SimTime now) {
    ProfileReport report = profile(*registry_, options_.apis, options_.trials, options_.seed + runs_, options_.profile);
    build_cache(report, *registry_, *map_);
    last_ = now;
    pending_ = false;
    ++runs_;
    return report;
  }

  /// Error raised through a cached path: drop everything now, re-profile at
  /// the next maintenance tick.
  void on_error(const Error&) {
    map_->invalidate_all();
    pending_ = true;
    ++invalidations_;
  }

  /// Returns true when a re-profile ran.
  bool maintain(SimTime now) {
    const bool due = options_.period && last_ && now - *last_ >= *options_.period;
    if (!pending_ && !due) return false;
    reprofile(now);
    return true;
  }

  std::shared_ptr<CacheDispatch> make_dispatch() {
    auto d = std::make_shared<CacheDispatch>(*registry_, map_);
    d->set_error_handler([this](const Error& e) { on_error(e); });
    return d;
  }

  bool reprofile_pending() const { return pending_; }
  std::size_t reprofile_count() const { return runs_; }
  std::size_t invalidation_count() const { return invalidations_; }

 private:
  const FunctionRegistry* registry_;
  std::shared_ptr<CacheMap> map_;
  Options options_;
  std::optional<SimTime> last_;
  bool pending_ = false;
  std::size_t runs_ = 0;
  std::size_t invalidations_ = 0;
};

}  // namespace elastic::cache
