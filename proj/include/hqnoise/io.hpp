#pragma once
// Explicit little-endian binary encoding for the on-disk formats (noise-pair
// datasets and model checkpoints). Byte order is pinned by shifting, not by
// copying host representations, so files are portable across platforms.

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include "errors.hpp"

namespace hqnoise::io {

inline void write_u8(std::ostream& os, uint8_t v) {
  os.put(static_cast<char>(v));
}

inline void write_u16(std::ostream& os, uint16_t v) {
  for (int i = 0; i < 2; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void write_u32(std::ostream& os, uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void write_u64(std::ostream& os, uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void write_f32(std::ostream& os, float v) {
  write_u32(os, std::bit_cast<uint32_t>(v));
}

inline void write_f64(std::ostream& os, double v) {
  write_u64(os, std::bit_cast<uint64_t>(v));
}

inline uint8_t read_u8(std::istream& is) {
  const int c = is.get();
  if (c == EOF) throw IoError("unexpected end of file");
  return static_cast<uint8_t>(c);
}

inline uint16_t read_u16(std::istream& is) {
  uint16_t v = 0;
  for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(read_u8(is)) << (8 * i);
  return v;
}

inline uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(read_u8(is)) << (8 * i);
  return v;
}

inline uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(read_u8(is)) << (8 * i);
  return v;
}

inline float read_f32(std::istream& is) { return std::bit_cast<float>(read_u32(is)); }

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline void write_magic(std::ostream& os, const char (&magic)[5]) {
  os.write(magic, 4);
}

inline void expect_magic(std::istream& is, const char (&magic)[5], const char* what) {
  char buf[4];
  if (!is.read(buf, 4) || buf[0] != magic[0] || buf[1] != magic[1] || buf[2] != magic[2] ||
      buf[3] != magic[3])
    throw ProtocolError(std::string(what) + ": bad magic, not a " + magic + " file");
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return is;
}

}  // namespace hqnoise::io
