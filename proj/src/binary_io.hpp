#pragma once

// Little-endian primitive encoding for the on-disk formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "sessim/error.hpp"

namespace sessim::binio {

template <typename U>
void put_le(std::ostream& out, U value) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

inline void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_bytes(std::ostream& out, const std::string& s) {
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

// Reads exactly sizeof(U) bytes; returns false on short read.
template <typename U>
bool get_le(std::istream& in, U& value) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) return false;
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
  value = v;
  return true;
}

inline bool get_f32(std::istream& in, float& v) {
  std::uint32_t bits = 0;
  if (!get_le(in, bits)) return false;
  v = std::bit_cast<float>(bits);
  return true;
}

inline bool get_bytes(std::istream& in, std::string& s, std::size_t n) {
  s.resize(n);
  return n == 0 || static_cast<bool>(in.read(s.data(), static_cast<std::streamsize>(n)));
}

}  // namespace sessim::binio
