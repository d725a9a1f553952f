#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <thread>

#include "elastic/cache/profiler.hpp"
#include "elastic/verbs/verbs.hpp"

using namespace elastic;
using namespace elastic::cache;

namespace {

FunctionRegistry fresh_registry() {
  return verbs::make_verbs_registry(CostModel::defaults(), {}, std::make_shared<verbs::HostState>());
}

}  // namespace

TEST(Dispatch, HitIsFreeMissIsPassThrough) {
  auto reg = fresh_registry();
  auto map = std::make_shared<CacheMap>();
  map->install({{verbs::kPerCoreCheck, 0}});
  CostLedger ledger;
  Track t(kEpoch, &ledger);
  CacheDispatch cached(reg, map);
  EXPECT_EQ(cached.call(verbs::kPerCoreCheck, {}, t), 0);
  EXPECT_EQ(t.elapsed(), Duration::zero());
  EXPECT_EQ(cached.hits(), 1u);

  CacheDispatch plain(reg);
  const Value direct = reg.at("read_abi_version").impl({});
  EXPECT_EQ(cached.call("read_abi_version", {}, t), direct);
  EXPECT_EQ(t.elapsed(), reg.at("read_abi_version").cost.total());
  try {
    cached.call("no_such_function", {}, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unregistered_function);
  }
}

// Ledger replay: total charged equals the cost of missed calls only.
TEST(Dispatch, RandomDispatchesChargeOnlyMisses) {
  auto reg = fresh_registry();
  auto map = std::make_shared<CacheMap>();
  map->install({{verbs::kPerCoreCheck, 0}, {"read_abi_version", 1}, {"query_page_size", 4096}});
  std::vector<std::string> names;
  for (const auto& s : reg.specs()) names.push_back(s.name);
  CostLedger ledger;
  Track t(kEpoch, &ledger);
  CacheDispatch d(reg, map);
  std::mt19937_64 rng(3);
  Duration expected{};
  for (int i = 0; i < 1000; ++i) {
    const std::string& name = names[rng() % names.size()];
    if (map->snapshot()->entries.count(name) == 0) expected += reg.at(name).cost.total();
    d.call(name, {}, t);
  }
  EXPECT_EQ(t.elapsed(), expected);
  EXPECT_EQ(ledger.total_for(t.id()), expected);
  EXPECT_EQ(d.hits() + d.misses(), d.total());
  EXPECT_EQ(d.total(), 1000u);
}

TEST(Profile, PerCoreCheckIsConstantAndCountersAreNot) {
  auto reg = fresh_registry();
  int counter = 0;
  reg.add({"count_calls", "alloc_pd", true, {}, [&counter](std::span<const Value>) { return Value{++counter}; }});
  const ProfileReport report = profile(reg, all_api_calls(), 16, 1);
  EXPECT_TRUE(report.is_constant(verbs::kPerCoreCheck));
  EXPECT_EQ(report.functions.at(verbs::kPerCoreCheck).returns.begin()->first, 0);
  EXPECT_FALSE(report.is_constant("count_calls"));
  EXPECT_FALSE(report.is_constant("open_uverbs_fd"));
  const auto cache = build_cache(report, reg);
  EXPECT_EQ(cache->snapshot()->entries.count("count_calls"), 0u);
}

TEST(Profile, DeterministicForSeed) {
  const auto a = profile(fresh_registry(), all_api_calls(), 16, 77).serialize();
  const auto b = profile(fresh_registry(), all_api_calls(), 16, 77).serialize();
  EXPECT_EQ(a, b);
  EXPECT_NE(a, profile(fresh_registry(), all_api_calls(), 16, 78).serialize());
}

TEST(Profile, RejectsEmptyInputs) {
  auto reg = fresh_registry();
  EXPECT_THROW(profile(reg, {}, 16, 1), Error);
  EXPECT_THROW(profile(reg, all_api_calls(), 0, 1), Error);
}

TEST(Profile, ThresholdNeedsCallsAndOrderings) {
  auto reg = fresh_registry();
  // One trial cannot reach four distinct orderings.
  const auto report = profile(reg, all_api_calls(), 1, 5);
  EXPECT_TRUE(report.constant_functions().empty());
}

TEST(BuildCache, EligibilityRules) {
  auto reg = fresh_registry();
  ProfileReport only_check;
  only_check.functions[verbs::kPerCoreCheck] = FunctionProfile{{{0, 20}}, 20, 0, {1, 2, 3, 4}, true};
  only_check.functions["open_uverbs_fd"] = FunctionProfile{{{3, 1}, {4, 1}}, 2, 0, {1}, false};
  auto map = std::make_shared<CacheMap>();
  const auto gen = map->generation();
  build_cache(only_check, reg, *map);
  EXPECT_EQ(map->size(), 1u);
  EXPECT_EQ(map->generation(), gen + 1);

  ProfileReport none;
  none.functions["open_uverbs_fd"] = FunctionProfile{{{3, 1}, {4, 1}}, 2, 0, {1}, false};
  EXPECT_TRUE(build_cache(none, reg)->empty());

  ProfileReport not_idempotent;
  not_idempotent.functions["query_device_caps"] = FunctionProfile{{{0x5a, 30}}, 30, 0, {1, 2, 3, 4, 5}, true};
  EXPECT_TRUE(build_cache(not_idempotent, reg)->empty());
}

TEST(BuildCache, NoEntryWithoutDeclaredIdempotence) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    auto reg = fresh_registry();
    const auto report = profile(reg, all_api_calls(), 16, seed);
    EXPECT_TRUE(report.is_constant("query_device_caps"));
    const auto snap = build_cache(report, reg)->snapshot();
    for (const auto& [name, _] : snap->entries)
      EXPECT_TRUE(reg.at(name).declared_idempotent) << name;
  }
}

TEST(Verify, DefaultPoisonedAndEmpty) {
  auto reg = fresh_registry();
  const auto report = profile(reg, all_api_calls(), 16, 9);
  const auto cache = build_cache(report, reg);
  const auto workload = make_workload(reg, all_api_calls(), 1000, 9);
  ASSERT_EQ(workload.calls.size(), 1000u);
  EXPECT_TRUE(verify_cache(fresh_registry, cache, workload).ok);

  auto poisoned = std::make_shared<CacheMap>();
  poisoned->install({{verbs::kPerCoreCheck, 1}});
  const auto bad = verify_cache(fresh_registry, poisoned, workload);
  EXPECT_FALSE(bad.ok);
  EXPECT_GT(bad.mismatches, 0u);

  EXPECT_TRUE(verify_cache(fresh_registry, std::make_shared<CacheMap>(), workload).ok);
}

TEST(Verify, SoundAcrossHundredSeeds) {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto reg = fresh_registry();
    const auto cache = build_cache(profile(reg, all_api_calls(), 16, seed), reg);
    const auto r = verify_cache(fresh_registry, cache, make_workload(reg, all_api_calls(), 1000, seed * 31));
    ASSERT_TRUE(r.ok) << "seed " << seed;
    ASSERT_EQ(r.calls, 1000u);
  }
}

TEST(Speedup, CachedOpenDeviceSubtractsCachedCosts) {
  auto reg = fresh_registry();
  const auto cache = build_cache(profile(reg, all_api_calls(), 16, 4), reg);
  Track slow, fast;
  CacheDispatch(reg).run_chain(verbs::api::open_device, slow);
  CacheDispatch(reg, cache).run_chain(verbs::api::open_device, fast);
  Duration cached_costs{};
  for (const FunctionSpec* s : reg.chain(verbs::api::open_device))
    if (cache->snapshot()->entries.count(s->name)) cached_costs += s->cost.total();
  EXPECT_EQ(fast.elapsed(), slow.elapsed() - cached_costs);
  EXPECT_GE(static_cast<double>(slow.elapsed().count()) / static_cast<double>(fast.elapsed().count()), 10.0);
}

TEST(Invalidate, NamesAndAll) {
  auto reg = fresh_registry();
  auto map = build_cache(profile(reg, all_api_calls(), 16, 2), reg);
  const auto gen = map->generation();
  const std::vector<std::string> drop{verbs::kPerCoreCheck};
  map->invalidate(drop);
  EXPECT_EQ(map->snapshot()->entries.count(verbs::kPerCoreCheck), 0u);
  EXPECT_EQ(map->generation(), gen + 1);
  map->invalidate_all();
  EXPECT_TRUE(map->empty());
  EXPECT_EQ(map->generation(), gen + 2);
}

// After invalidate-all the dispatch trace equals a never-cached system.
TEST(Invalidate, AllIsIdenticalToNeverCached) {
  auto run = [](bool cache_then_drop) {
    auto reg = fresh_registry();
    auto map = std::make_shared<CacheMap>();
    if (cache_then_drop) {
      build_cache(profile(fresh_registry(), all_api_calls(), 16, 3), reg, *map);
      map->invalidate_all();
    }
    CostLedger ledger;
    Track t(kEpoch, &ledger);
    CacheDispatch d(reg, cache_then_drop ? map : nullptr);
    std::vector<Value> values;
    for (const auto& name : make_workload(reg, all_api_calls(), 500, 12).calls) values.push_back(d.call(name, {}, t));
    std::vector<std::pair<std::string, std::int64_t>> charges;
    for (const auto& e : ledger.entries()) charges.emplace_back(e.label, e.cost.count());
    return std::make_pair(values, charges);
  };
  EXPECT_EQ(run(true), run(false));
}

TEST(Manager, InjectedErrorInvalidatesThenReprofiles) {
  auto reg = fresh_registry();
  CacheManager mgr(reg, std::make_shared<CacheMap>(), {});
  mgr.reprofile(kEpoch);
  ASSERT_FALSE(mgr.map()->empty());
  auto dispatch = mgr.make_dispatch();

  reg.inject_failure("open_uverbs_fd");
  Track failed;
  EXPECT_THROW(dispatch->run_chain(verbs::api::open_device, failed), Error);
  EXPECT_TRUE(mgr.map()->empty());
  EXPECT_TRUE(mgr.reprofile_pending());

  Track next;
  dispatch->run_chain(verbs::api::open_device, next);
  EXPECT_NEAR(to_micros(next.elapsed()), 22900.0, 1.0);

  EXPECT_TRUE(mgr.maintain(kEpoch + micros(1)));
  EXPECT_FALSE(mgr.reprofile_pending());
  Track again;
  dispatch->run_chain(verbs::api::open_device, again);
  EXPECT_NEAR(to_micros(again.elapsed()), 2180.0, 1.0);
}

TEST(Manager, PeriodicTrigger) {
  auto reg = fresh_registry();
  CacheManager::Options opt;
  opt.period = micros(60e6);
  CacheManager mgr(reg, std::make_shared<CacheMap>(), opt);
  mgr.reprofile(kEpoch);
  EXPECT_FALSE(mgr.maintain(kEpoch + micros(59e6)));
  EXPECT_TRUE(mgr.maintain(kEpoch + micros(60e6)));
  EXPECT_EQ(mgr.reprofile_count(), 2u);

  CacheManager off(reg, std::make_shared<CacheMap>(), {});
  off.reprofile(kEpoch);
  EXPECT_FALSE(off.maintain(kEpoch + micros(1e12)));
}

TEST(CacheMapFile, RoundTrip) {
  auto reg = fresh_registry();
  auto map = build_cache(profile(reg, all_api_calls(), 16, 6), reg);
  const auto path = std::filesystem::temp_directory_path() / "elastic_cache_roundtrip.conf";
  map->save(path);
  auto loaded = CacheMap::load(path);
  EXPECT_EQ(loaded->serialize(), map->serialize());
  EXPECT_EQ(loaded->generation(), map->generation());
  std::filesystem::remove(path);
  EXPECT_THROW(CacheMap::load(path), Error);
}

// Readers always see one whole generation, never a mix.
TEST(CacheMapConcurrency, ChainSeesSingleGeneration) {
  FunctionRegistry reg;
  for (const char* name : {"f1", "f2", "f3"})
    reg.add({name, "probe", true, {micros(1), {}}, [](std::span<const Value>) { return Value{-1}; }});
  auto map = std::make_shared<CacheMap>();
  map->install({{"f1", 0}, {"f2", 0}, {"f3", 0}});
  std::atomic<bool> stop{false};
  std::thread writer([&] {
    for (Value k = 1; k < 20000; ++k) map->install({{"f1", k}, {"f2", k}, {"f3", k}});
    stop = true;
  });
  std::vector<std::thread> readers;
  std::atomic<int> torn{0};
  for (int r = 0; r < 3; ++r) {
    readers.emplace_back([&] {
      CacheDispatch d(reg, map);
      Track t;
      while (!stop) {
        auto v = d.run_chain("probe", t);
        if (v["f1"] != v["f2"] || v["f2"] != v["f3"]) ++torn;
      }
    });
  }
  writer.join();
  for (auto& th : readers) th.join();
  EXPECT_EQ(torn.load(), 0);
}
