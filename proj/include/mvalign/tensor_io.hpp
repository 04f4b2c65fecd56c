#pragma once

// MVT1 tensor files: "MVT1", u32 rank, rank × u32 extents, f32 payload.
// Every integer and float is little-endian; the payload is row-major.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "mvalign/tensor.hpp"

namespace mvalign {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("truncated stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

}  // namespace detail

template <class T>
void write_mvt(std::ostream& os, const BasicTensor<T>& t) {
  os.write("MVT1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (const auto e : t.shape()) detail::put_u32(os, static_cast<std::uint32_t>(e));
  for (const T v : t.data()) detail::put_f32(os, static_cast<float>(v));
  if (!os) throw FormatError("MVT1 write failed");
}

template <class T = float>
BasicTensor<T> read_mvt(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || std::memcmp(magic.data(), "MVT1", 4) != 0) {
    throw FormatError("missing MVT1 magic");
  }
  const std::uint32_t rank = detail::get_u32(is);
  if (rank > 16) throw FormatError("implausible MVT1 rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = detail::get_u32(is);
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(detail::get_f32(is));
  return BasicTensor<T>(std::move(shape), std::move(data));
}

template <class T>
void save_mvt(const std::filesystem::path& path, const BasicTensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_mvt(os, t);
}

template <class T = float>
BasicTensor<T> load_mvt(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_mvt<T>(is);
}

}  // namespace mvalign
