// SPDX-License-Identifier: Apache-2.0
// Little-endian helpers shared by the WAV, feature-cache and checkpoint codecs.
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "prefnet/common.hpp"

namespace prefnet::detail {

static_assert(std::endian::native == std::endian::little,
              "binary codecs assume a little-endian host");

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const std::string& what) {
  std::array<char, sizeof(T)> bytes;
  in.read(bytes.data(), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw DataError(what + ": unexpected end of file");
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline std::string get_bytes(std::istream& in, std::size_t n, const std::string& what) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw DataError(what + ": unexpected end of file");
  }
  return s;
}

}  // namespace prefnet::detail
