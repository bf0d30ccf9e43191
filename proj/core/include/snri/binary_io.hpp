// SPDX-License-Identifier: Apache-2.0
// Little-endian stream helpers shared by the checkpoint and cache formats.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "snri/tensor.hpp"

namespace snri::io {

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw Error("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const auto n = read_le<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw Error("unexpected end of file");
  return s;
}

inline void write_tensor(std::ostream& out, const Tensor& t) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) write_le<std::uint64_t>(out, d);
  for (double x : t.data()) write_le<double>(out, x);
}

inline Tensor read_tensor(std::istream& in) {
  const auto rank = read_le<std::uint32_t>(in);
  if (rank > 8) throw Error("tensor rank out of range");
  std::vector<std::size_t> shape(rank);
  std::size_t n = rank ? 1 : 0;
  for (auto& d : shape) {
    d = static_cast<std::size_t>(read_le<std::uint64_t>(in));
    if (d == 0 || d > (1ull << 32)) throw Error("tensor dimension out of range");
    n *= d;
  }
  std::vector<double> data(n);
  for (double& x : data) x = read_le<double>(in);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace snri::io
