#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "elastic/core/error.hpp"

namespace elastic {

namespace detail {
inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}
}  // namespace detail

/// Flat `key = value` text configuration. `#` starts a comment. Duplicate
/// keys within one source are rejected; `merge` lets later sources override.
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text, std::string_view origin = "<string>") {
    Config cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw Error(Errc::config, std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
      auto key = std::string(detail::trim(line.substr(0, eq)));
      auto value = std::string(detail::trim(line.substr(eq + 1)));
      if (key.empty())
        throw Error(Errc::config, std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
      if (!cfg.values_.emplace(key, value).second)
        throw Error(Errc::config, std::string(origin) + ":" + std::to_string(line_no) + ": duplicate key " + key);
    }
    return cfg;
  }

  /// Loads a file. A `cost_model` key names another config (relative to this
  /// file) whose keys are merged underneath.
  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io, "cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    Config cfg = parse(buf.str(), path.string());
    if (auto ref = cfg.find("cost_model")) {
      std::filesystem::path base = std::filesystem::path(*ref);
      if (base.is_relative()) base = path.parent_path() / base;
      Config merged = load(base);
      merged.merge(cfg);
      merged.values_.erase("cost_model");
      return merged;
    }
    return cfg;
  }

  void merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

  bool has(std::string_view key) const { return values_.find(std::string(key)) != values_.end(); }

  std::optional<std::string> find(std::string_view key) const {
    auto it = values_.find(std::string(key));
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get_string(std::string_view key) const {
    auto v = find(key);
    if (!v) throw Error(Errc::config, "missing key " + std::string(key));
    return *v;
  }

  double get_double(std::string_view key) const { return to_double(key, get_string(key)); }
  double get_double(std::string_view key, double fallback) const {
    auto v = find(key);
    return v ? to_double(key, *v) : fallback;
  }

  std::int64_t get_int(std::string_view key) const { return to_int(key, get_string(key)); }
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const {
    auto v = find(key);
    return v ? to_int(key, *v) : fallback;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  std::map<std::string, std::string> with_prefix(std::string_view prefix) const {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : values_)
      if (k.compare(0, prefix.size(), prefix) == 0) out.emplace(k.substr(prefix.size()), v);
    return out;
  }

  /// Sorted `key = value` lines; identical configs give identical text.
  std::string canonical_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  /// FNV-1a over the canonical text.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_text()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  static double to_double(std::string_view key, const std::string& v) {
    try {
      std::size_t used = 0;
      double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw Error(Errc::config, "key " + std::string(key) + ": not a number: " + v);
    }
  }

  static std::int64_t to_int(std::string_view key, const std::string& v) {
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size())
      throw Error(Errc::config, "key " + std::string(key) + ": not an integer: " + v);
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace elastic
