#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "uwipt/core/tensor.hpp"

// Flat tensor container: "PFT1", then records of
//   u32 name_len | name bytes | u32 rank | u32 extents[rank] | f32 payload
// all little-endian, read until end of stream.

namespace uwipt {

inline constexpr char kTensorMagic[4] = {'P', 'F', 'T', '1'};

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(bytes, 4);
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char bytes[4];
  if (!is.read(reinterpret_cast<char*>(bytes), 4)) return false;
  v = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
      (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
  return true;
}

}  // namespace detail

inline void write_tensors(std::ostream& os, const NamedTensors& tensors) {
  os.write(kTensorMagic, 4);
  for (const auto& [name, t] : tensors) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) detail::put_u32(os, static_cast<std::uint32_t>(e));
    for (float v : t.data()) detail::put_u32(os, std::bit_cast<std::uint32_t>(v));
  }
  if (!os) throw DataError("failed writing tensor container");
}

inline NamedTensors read_tensors(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw DataError("tensor container: missing PFT1 magic");
  }
  NamedTensors out;
  for (;;) {
    std::uint32_t name_len = 0;
    if (!detail::get_u32(is, name_len)) break;
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!is.read(name.data(), name_len) || !detail::get_u32(is, rank)) {
      throw DataError("tensor container: truncated record header");
    }
    Shape shape(rank);
    for (auto& e : shape) {
      std::uint32_t v = 0;
      if (!detail::get_u32(is, v) || v == 0) throw DataError("tensor container: bad extents for '" + name + "'");
      e = v;
    }
    std::vector<float> data(shape_numel(shape));
    for (auto& v : data) {
      std::uint32_t bits = 0;
      if (!detail::get_u32(is, bits)) throw DataError("tensor container: truncated payload for '" + name + "'");
      v = std::bit_cast<float>(bits);
    }
    out.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  return out;
}

}  // namespace uwipt
