#pragma once
// Noise-pair dataset persistence. Layout (all integers little-endian):
//   "EDNP" | u16 version = 1 | u64 record count | u32 C, H, W
// followed by fixed-size records:
//   u64 seed | f32[C*H*W] z_T | f32[C*H*W] z_tilde_T | f32[C*H*W] I
//   | u8 has_s_rd | f64 s_rd | u8 has_s_hq | f64 s_hq
// Score payloads are written as 0.0 when the presence flag is 0. Latents are
// stored at 32-bit precision; a write -> read -> write cycle is byte-stable
// because reading yields exactly the float-rounded values.

#include <cstdint>
#include <string>
#include <vector>

#include "collector.hpp"
#include "io.hpp"

namespace hqnoise {

namespace detail {

inline void write_latent_f32(std::ofstream& os, const Tensor& t, const Shape& want) {
  if (t.shape() != want)
    throw ShapeError("dataset: record tensor " + shape_str(t.shape()) +
                     " does not match file shape " + shape_str(want));
  for (size_t i = 0; i < t.size(); ++i) io::write_f32(os, static_cast<float>(t[i]));
}

inline Tensor read_latent_f32(std::ifstream& is, const Shape& shape) {
  Tensor t(shape);
  for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(io::read_f32(is));
  return t;
}

}  // namespace detail

// Write pairs with the given latent shape (the shape parameter allows empty
// files, e.g. a filter pass that retains nothing).
inline void write_pairs(const std::string& path, const std::vector<NoisePair>& pairs,
                        const Shape& latent) {
  if (latent.size() != 3) throw ShapeError("dataset: latent shape must be rank 3");
  std::ofstream os = io::open_out(path);
  io::write_magic(os, "EDNP");
  io::write_u16(os, 1);
  io::write_u64(os, static_cast<uint64_t>(pairs.size()));
  for (int d : latent) io::write_u32(os, static_cast<uint32_t>(d));
  for (const NoisePair& p : pairs) {
    io::write_u64(os, p.seed);
    detail::write_latent_f32(os, p.z_T, latent);
    detail::write_latent_f32(os, p.z_tilde_T, latent);
    detail::write_latent_f32(os, p.I, latent);
    io::write_u8(os, p.s_rd.has_value() ? 1 : 0);
    io::write_f64(os, p.s_rd.value_or(0.0));
    io::write_u8(os, p.s_hq.has_value() ? 1 : 0);
    io::write_f64(os, p.s_hq.value_or(0.0));
  }
  if (!os) throw IoError("failed writing dataset '" + path + "'");
}

inline void write_pairs(const std::string& path, const std::vector<NoisePair>& pairs) {
  if (pairs.empty())
    throw DataError("dataset: cannot infer the latent shape from zero records");
  write_pairs(path, pairs, pairs.front().z_T.shape());
}

// Read every record. Provenance that is not part of the file format (view,
// step count, guidance scales) is left at defaults; consumers that need the
// conditioned view re-derive it from the seed exactly as collection did.
inline std::vector<NoisePair> read_pairs(const std::string& path) {
  std::ifstream is = io::open_in(path);
  io::expect_magic(is, "EDNP", "dataset");
  const uint16_t version = io::read_u16(is);
  if (version != 1)
    throw ProtocolError("dataset: unsupported version " + std::to_string(version));
  const uint64_t count = io::read_u64(is);
  Shape latent{static_cast<int>(io::read_u32(is)), static_cast<int>(io::read_u32(is)),
               static_cast<int>(io::read_u32(is))};
  if (latent[0] < 1 || latent[1] < 1 || latent[2] < 1)
    throw ProtocolError("dataset: invalid latent shape in header");
  std::vector<NoisePair> pairs;
  pairs.reserve(static_cast<size_t>(count));
  for (uint64_t r = 0; r < count; ++r) {
    NoisePair p;
    p.seed = io::read_u64(is);
    p.z_T = detail::read_latent_f32(is, latent);
    p.z_tilde_T = detail::read_latent_f32(is, latent);
    p.I = detail::read_latent_f32(is, latent);
    const uint8_t has_rd = io::read_u8(is);
    const double s_rd = io::read_f64(is);
    const uint8_t has_hq = io::read_u8(is);
    const double s_hq = io::read_f64(is);
    if (has_rd > 1 || has_hq > 1) throw ProtocolError("dataset: invalid presence flag");
    if (has_rd) p.s_rd = s_rd;
    if (has_hq) p.s_hq = s_hq;
    pairs.push_back(std::move(p));
  }
  if (is.peek() != EOF)
    throw ProtocolError("dataset: trailing bytes after " + std::to_string(count) +
                        " records");
  return pairs;
}

}  // namespace hqnoise
