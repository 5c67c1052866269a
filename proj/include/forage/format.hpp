#pragma once

#include <charconv>
#include <cstdint>
#include <string>

namespace forage {

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v)
{
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Zero-padded 16-digit lowercase hex.
inline std::string format_hex(std::uint64_t v)
{
  char buf[17];
  for (int i = 15; i >= 0; --i) {
    buf[i] = "0123456789abcdef"[v & 0xF];
    v >>= 4;
  }
  buf[16] = '\0';
  return buf;
}

}  // namespace forage
