#pragma once

// DGT1 tensor container:
//   "DGT1" | u32 ndim | ndim x u64 extent | prod(extents) x f64
// All integers and reals little-endian.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "dgd/error.hpp"

namespace dgd {

struct TensorRecord {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::uint64_t size() const {
    return std::accumulate(dims.begin(), dims.end(), std::uint64_t{1}, std::multiplies<>());
  }

  bool valid() const {
    if (dims.empty()) return false;
    for (auto d : dims)
      if (d < 1) return false;
    return data.size() == size();
  }

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void put_le(std::ostream& os, T v) {
  v = byteswap_if_big(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

// Returns false on short read.
template <typename T>
bool get_le(std::istream& is, T& out) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) return false;
  out = byteswap_if_big(v);
  return true;
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const TensorRecord& t) {
  require(t.valid(), Errc::LengthMismatch, "tensor data length does not match dims");
  os.write("DGT1", 4);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) detail::put_le<std::uint64_t>(os, d);
  for (double v : t.data) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
}

inline TensorRecord read_tensor(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) fail(Errc::LengthMismatch, "missing tensor header");
  if (std::memcmp(magic, "DGT1", 4) != 0) fail(Errc::BadMagic, "expected DGT1");
  std::uint32_t ndim = 0;
  if (!detail::get_le(is, ndim)) fail(Errc::LengthMismatch, "missing ndim");
  require(ndim >= 1, Errc::LengthMismatch, "tensor has zero dims");
  TensorRecord t;
  t.dims.resize(ndim);
  for (auto& d : t.dims) {
    if (!detail::get_le(is, d)) fail(Errc::LengthMismatch, "missing extent");
    require(d >= 1, Errc::LengthMismatch, "zero extent");
  }
  const auto n = t.size();
  // Corrupt headers can claim absurd sizes; grow with the payload actually present.
  t.data.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 20)));
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    if (!detail::get_le(is, bits)) fail(Errc::LengthMismatch, "payload shorter than header implies");
    t.data.push_back(std::bit_cast<double>(bits));
  }
  return t;
}

inline void write_tensor(const TensorRecord& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(bool(os), Errc::Io, "cannot open " + path);
  write_tensor(os, t);
  require(bool(os), Errc::Io, "write failed: " + path);
}

inline TensorRecord read_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), Errc::Io, "cannot open " + path);
  return read_tensor(is);
}

}  // namespace dgd
