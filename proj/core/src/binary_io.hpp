// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian primitives shared by the binary file formats.

#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "sdf/errors.hpp"

namespace sdf::io {

template <class U>
void write_le(std::ostream& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
  }
  out.write(bytes, sizeof(U));
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
inline void write_i32(std::ostream& out, std::int32_t v) {
  write_le(out, static_cast<std::uint32_t>(v));
}
inline void write_f64(std::ostream& out, double v) {
  write_le(out, std::bit_cast<std::uint64_t>(v));
}

// Reads exactly sizeof(U) bytes; throws FormatError naming `section` when the
// stream ends early.
template <class U>
U read_le(std::istream& in, const char* section) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw FormatError(std::string("truncated payload in section '") + section + "'");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

inline std::uint32_t read_u32(std::istream& in, const char* section) {
  return read_le<std::uint32_t>(in, section);
}
inline std::uint64_t read_u64(std::istream& in, const char* section) {
  return read_le<std::uint64_t>(in, section);
}
inline std::int32_t read_i32(std::istream& in, const char* section) {
  return static_cast<std::int32_t>(read_le<std::uint32_t>(in, section));
}
inline double read_f64(std::istream& in, const char* section) {
  return std::bit_cast<double>(read_le<std::uint64_t>(in, section));
}

inline std::string read_bytes(std::istream& in, std::size_t n, const char* section) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
    throw FormatError(std::string("truncated payload in section '") + section + "'");
  }
  return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const char* what) {
  char got[4];
  if (!in.read(got, 4) || std::string(got, 4) != std::string(magic, 4)) {
    throw FormatError(std::string(what) + ": bad magic, expected \"" + magic + "\"");
  }
}

}  // namespace sdf::io
