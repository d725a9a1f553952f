#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace elastic {

/// Simulated clock domain. Time is counted in nanoseconds since the
/// simulation epoch so microsecond costs with two decimals stay exact.
struct SimClock {
  using rep = std::int64_t;
  using period = std::nano;
  using duration = std::chrono::nanoseconds;
  using time_point = std::chrono::time_point<SimClock, duration>;
  static constexpr bool is_steady = true;
};

using Duration = std::chrono::nanoseconds;
using SimTime = SimClock::time_point;

inline constexpr SimTime kEpoch{};

inline Duration micros(double us) {
  return Duration{static_cast<std::int64_t>(std::llround(us * 1000.0))};
}

inline double to_micros(Duration d) { return static_cast<double>(d.count()) / 1000.0; }
inline double to_micros(SimTime t) { return to_micros(t.time_since_epoch()); }

struct LedgerEntry {
  std::uint64_t track;
  std::string label;
  Duration cost;
};

/// Append-only record of every charged cost. Tests sum it independently of
/// the tracks to audit elapsed time.
class CostLedger {
 public:
  void record(std::uint64_t track, std::string_view label, Duration cost) {
    std::lock_guard lock(mu_);
    entries_.push_back({track, std::string(label), cost});
  }

  std::vector<LedgerEntry> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

  Duration total_for(std::uint64_t track) const {
    std::lock_guard lock(mu_);
    Duration sum{};
    for (const auto& e : entries_)
      if (e.track == track) sum += e.cost;
    return sum;
  }

  std::size_t count_matching(std::uint64_t track, std::string_view needle) const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [&](const LedgerEntry& e) {
      return e.track == track && e.label.find(needle) != std::string::npos;
    }));
  }

  void clear() {
    std::lock_guard lock(mu_);
    entries_.clear();
  }

 private:
  mutable std::mutex mu_;
  std::vector<LedgerEntry> entries_;
};

namespace detail {
inline std::uint64_t next_track_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}
}  // namespace detail

/// A logical thread of execution on virtual time. Sequential work adds to
/// the cursor; parallel tracks are forked from a cursor and joined as max.
class Track {
 public:
  explicit Track(SimTime start = kEpoch, CostLedger* ledger = nullptr)
      : id_(detail::next_track_id()), start_(start), cursor_(start), ledger_(ledger) {}

  std::uint64_t id() const { return id_; }
  SimTime start() const { return start_; }
  SimTime now() const { return cursor_; }
  Duration elapsed() const { return cursor_ - start_; }
  CostLedger* ledger() const { return ledger_; }

  void charge(std::string_view label, Duration cost) {
    if (cost < Duration::zero()) cost = Duration::zero();
    cursor_ += cost;
    if (ledger_ != nullptr) ledger_->record(id_, label, cost);
  }

  // Idle wait; not a charge.
  void wait_until(SimTime t) { cursor_ = std::max(cursor_, t); }

  Track fork() const { return Track(cursor_, ledger_); }

  void join(const Track& other) { cursor_ = std::max(cursor_, other.cursor_); }

 private:
  std::uint64_t id_;
  SimTime start_;
  SimTime cursor_;
  CostLedger* ledger_;
};

/// Global simulated time. Never moves backwards.
class VirtualClock {
 public:
  SimTime now() const { return now_; }

  void advance_to(SimTime t) { now_ = std::max(now_, t); }
  void advance_by(Duration d) {
    if (d > Duration::zero()) now_ += d;
  }

  Track track(CostLedger* ledger = nullptr) const { return Track(now_, ledger); }

 private:
  SimTime now_ = kEpoch;
};

}  // namespace elastic
