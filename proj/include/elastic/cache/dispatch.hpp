#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "elastic/core/config.hpp"
#include "elastic/core/cost_model.hpp"
#include "elastic/core/error.hpp"
#include "elastic/core/time.hpp"

namespace elastic::cache {

using Value = std::int64_t;

/// One internal control-plane subroutine.
struct FunctionSpec {
  std::string name;
  // Verbs call whose chain runs this subroutine; empty for standalone ones.
  std::string api;
  bool declared_idempotent = false;
  SubroutineCost cost;
  std::function<Value(std::span<const Value>)> impl;
};

class FunctionRegistry {
 public:
  void add(FunctionSpec spec) {
    if (index_.count(spec.name) != 0) throw Error(Errc::invalid_argument, "duplicate function " + spec.name);
    index_[spec.name] = specs_.size();
    specs_.push_back(std::move(spec));
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  const FunctionSpec& at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw Error(Errc::unregistered_function, std::string(name));
    return specs_[it->second];
  }

  /// Subroutines of one verbs call, in registration order.
  std::vector<const FunctionSpec*> chain(std::string_view api) const {
    std::vector<const FunctionSpec*> out;
    for (const auto& s : specs_)
      if (s.api == api) out.push_back(&s);
    return out;
  }

  const std::vector<FunctionSpec>& specs() const { return specs_; }

  /// The next `count` executions of `name` throw.
  void inject_failure(std::string_view name, int count = 1) {
    at(name);
    std::lock_guard lock(failures_->mu);
    failures_->pending[std::string(name)] += count;
  }

  Value execute(const FunctionSpec& spec, std::span<const Value> args) const {
    {
      std::lock_guard lock(failures_->mu);
      auto it = failures_->pending.find(spec.name);
      if (it != failures_->pending.end() && it->second > 0) {
        --it->second;
        throw Error(Errc::injected_failure, spec.name);
      }
    }
    return spec.impl(args);
  }

 private:
  std::vector<FunctionSpec> specs_;
  std::map<std::string, std::size_t> index_;
  struct Failures {
    std::mutex mu;
    std::map<std::string, int> pending;
  };
  std::shared_ptr<Failures> failures_ = std::make_shared<Failures>();
};

struct CacheSnapshot {
  std::map<std::string, Value> entries;
  std::uint64_t generation = 0;
};

/// Host-wide map from function name to its cached return value. Readers get
/// an immutable snapshot; writers swap in a new generation.
class CacheMap {
 public:
  CacheMap() : current_(std::make_shared<const CacheSnapshot>()) {}

  std::shared_ptr<const CacheSnapshot> snapshot() const {
    std::lock_guard lock(mu_);
    return current_;
  }

  void install(std::map<std::string, Value> entries) {
    std::lock_guard lock(mu_);
    current_ = std::make_shared<const CacheSnapshot>(CacheSnapshot{std::move(entries), current_->generation + 1});
  }

  void invalidate(std::span<const std::string> names) {
    std::lock_guard lock(mu_);
    auto entries = current_->entries;
    for (const auto& n : names) entries.erase(n);
    current_ = std::make_shared<const CacheSnapshot>(CacheSnapshot{std::move(entries), current_->generation + 1});
  }

  void invalidate_all() {
    std::lock_guard lock(mu_);
    current_ = std::make_shared<const CacheSnapshot>(CacheSnapshot{{}, current_->generation + 1});
  }

  std::size_t size() const { return snapshot()->entries.size(); }
  bool empty() const { return snapshot()->entries.empty(); }
  std::uint64_t generation() const { return snapshot()->generation; }

  std::string serialize() const {
    auto snap = snapshot();
    std::ostringstream out;
    out << "generation = " << snap->generation << "\n";
    for (const auto& [name, value] : snap->entries) out << "entry." << name << " = " << value << "\n";
    return out.str();
  }

  static std::shared_ptr<CacheMap> deserialize(std::string_view text) {
    const Config cfg = Config::parse(text, "<cache>");
    auto map = std::make_shared<CacheMap>();
    std::map<std::string, Value> entries;
    for (const auto& [name, value] : cfg.with_prefix("entry.")) entries[name] = cfg.get_int("entry." + name);
    map->current_ = std::make_shared<const CacheSnapshot>(
        CacheSnapshot{std::move(entries), static_cast<std::uint64_t>(cfg.get_int("generation", 0))});
    return map;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(Errc::io, "cannot write " + path.string());
    out << serialize();
  }

  static std::shared_ptr<CacheMap> load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io, "cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return deserialize(buf.str());
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const CacheSnapshot> current_;
};

/// Routes subroutine calls either to the cache (zero cost) or to the
/// implementation (charged). A null cache map is uncached mode.
class CacheDispatch {
 public:
  using Observer = std::function<void(const std::string& name, Value value)>;
  using ErrorHandler = std::function<void(const Error&)>;

  explicit CacheDispatch(const FunctionRegistry& registry, std::shared_ptr<CacheMap> cache = nullptr)
      : registry_(&registry), cache_(std::move(cache)) {}

  const FunctionRegistry& registry() const { return *registry_; }
  const std::shared_ptr<CacheMap>& cache() const { return cache_; }

  void set_observer(Observer observer) { observer_ = std::move(observer); }
  void set_error_handler(ErrorHandler handler) { on_cached_error_ = std::move(handler); }

  Value call(std::string_view name, std::span<const Value> args, Track& track) {
    const FunctionSpec& spec = registry_->at(name);
    auto snap = cache_ ? cache_->snapshot() : nullptr;
    return invoke(spec, args, track, snap.get(), spec.name);
  }

  /// Runs every subroutine registered for `api` against one cache
  /// generation; returns name -> value.
  std::map<std::string, Value> run_chain(std::string_view api, Track& track, std::span<const Value> args = {}) {
    auto snap = cache_ ? cache_->snapshot() : nullptr;
    std::map<std::string, Value> out;
    for (const FunctionSpec* spec : registry_->chain(api))
      out[spec->name] = invoke(*spec, args, track, snap.get(), std::string(api) + "/" + spec->name);
    return out;
  }

  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }
  std::uint64_t total() const { return total_.load(); }

 private:
  Value invoke(const FunctionSpec& spec, std::span<const Value> args, Track& track, const CacheSnapshot* snap,
               const std::string& label) {
    total_.fetch_add(1);
    const bool cached_path = snap != nullptr && !snap->entries.empty();
    if (cached_path) {
      if (auto it = snap->entries.find(spec.name); it != snap->entries.end()) {
        hits_.fetch_add(1);
        if (observer_) observer_(spec.name, it->second);
        return it->second;
      }
    }
    misses_.fetch_add(1);
    Value v = 0;
    try {
      v = registry_->execute(spec, args);
    } catch (const Error& e) {
      track.charge(label, spec.cost.total());
      if (cached_path && on_cached_error_) on_cached_error_(e);
      throw;
    }
    track.charge(label, spec.cost.total());
    if (observer_) observer_(spec.name, v);
    return v;
  }

  const FunctionRegistry* registry_;
  std::shared_ptr<CacheMap> cache_;
  Observer observer_;
  ErrorHandler on_cached_error_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
  std::atomic<std::uint64_t> total_{0};
};

}  // namespace elastic::cache
