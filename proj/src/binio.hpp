#pragma once

// Internal little-endian binary field helpers shared by the dump formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

#include "phihom/errors.hpp"

namespace phihom::binio {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_u64(std::istream& in) {
  char bytes[8];
  in.read(bytes, 8);
  if (!in) throw InvalidInput("truncated binary dump");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  }
  return v;
}

inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace phihom::binio
