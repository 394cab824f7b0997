#pragma once

// Little-endian scalar encoding shared by the persisted formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "tplreg/error.hpp"

namespace tplreg::detail {

template <class T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <class T>
void write_le(std::ostream& out, T v) {
  v = byteswap_if_big(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw Error(ErrorCode::Format, "unexpected end of binary stream");
  }
  return byteswap_if_big(v);
}

inline void write_tag(std::ostream& out, const char (&tag)[5]) { out.write(tag, 4); }

inline void expect_tag(std::istream& in, const char (&tag)[5]) {
  char got[4] = {0, 0, 0, 0};
  in.read(got, 4);
  if (in.gcount() != 4 || std::memcmp(got, tag, 4) != 0) {
    throw Error(ErrorCode::Format, std::string("missing magic tag ") + tag);
  }
}

}  // namespace tplreg::detail
