#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace elastic {

enum class Errc {
  invalid_argument,
  config,
  io,
  unknown_device,
  closed_context,
  illegal_transition,
  missing_remote,
  queue_full,
  no_route,
  unregistered_function,
  injected_failure,
  exhausted,
  unknown_pid,
  dead_process,
  lifecycle,
  unknown_container,
  ownership,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::config: return "config";
    case Errc::io: return "io";
    case Errc::unknown_device: return "unknown_device";
    case Errc::closed_context: return "closed_context";
    case Errc::illegal_transition: return "illegal_transition";
    case Errc::missing_remote: return "missing_remote";
    case Errc::queue_full: return "queue_full";
    case Errc::no_route: return "no_route";
    case Errc::unregistered_function: return "unregistered_function";
    case Errc::injected_failure: return "injected_failure";
    case Errc::exhausted: return "exhausted";
    case Errc::unknown_pid: return "unknown_pid";
    case Errc::dead_process: return "dead_process";
    case Errc::lifecycle: return "lifecycle";
    case Errc::unknown_container: return "unknown_container";
    case Errc::ownership: return "ownership";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace elastic
