#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

#include "elastic/core/error.hpp"

namespace elastic {

/// 16-byte global endpoint address. Text form is `xx:xx:...:xx`.
class Gid {
 public:
  using Bytes = std::array<std::uint8_t, 16>;

  constexpr Gid() = default;
  constexpr explicit Gid(const Bytes& bytes) : bytes_(bytes) {}

  static Gid parse(std::string_view text) {
    Bytes bytes{};
    std::size_t pos = 0;
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      if (i > 0) {
        if (pos >= text.size() || text[pos] != ':') throw Error(Errc::invalid_argument, "malformed gid: " + std::string(text));
        ++pos;
      }
      if (pos + 2 > text.size()) throw Error(Errc::invalid_argument, "malformed gid: " + std::string(text));
      int hi = hex_value(text[pos]);
      int lo = hex_value(text[pos + 1]);
      if (hi < 0 || lo < 0) throw Error(Errc::invalid_argument, "malformed gid: " + std::string(text));
      bytes[i] = static_cast<std::uint8_t>(hi * 16 + lo);
      pos += 2;
    }
    if (pos != text.size()) throw Error(Errc::invalid_argument, "malformed gid: " + std::string(text));
    return Gid(bytes);
  }

  /// Link-local style address fe80::<host>:<device>.
  static Gid for_device(std::uint16_t host, std::uint16_t device) {
    Bytes b{};
    b[0] = 0xfe;
    b[1] = 0x80;
    b[12] = static_cast<std::uint8_t>(host >> 8);
    b[13] = static_cast<std::uint8_t>(host & 0xff);
    b[14] = static_cast<std::uint8_t>(device >> 8);
    b[15] = static_cast<std::uint8_t>(device & 0xff);
    return Gid(b);
  }

  std::string to_string() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(47);
    for (std::size_t i = 0; i < bytes_.size(); ++i) {
      if (i > 0) out.push_back(':');
      out.push_back(digits[bytes_[i] >> 4]);
      out.push_back(digits[bytes_[i] & 0xf]);
    }
    return out;
  }

  const Bytes& bytes() const { return bytes_; }

  friend auto operator<=>(const Gid&, const Gid&) = default;

 private:
  static constexpr int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  }

  Bytes bytes_{};
};

}  // namespace elastic
