// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <type_traits>

namespace hm4sr {

/// Writes values as little-endian bytes regardless of host order.
template <typename T>
void write_le(std::ostream& out, std::span<const T> values) {
  static_assert(std::is_arithmetic_v<T>);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (const T& v : values) {
      unsigned char bytes[sizeof(T)];
      std::memcpy(bytes, &v, sizeof(T));
      for (std::size_t i = sizeof(T); i-- > 0;) out.put(static_cast<char>(bytes[i]));
    }
  }
}

/// Reads exactly values.size() little-endian values; false on short read.
template <typename T>
bool read_le(std::istream& in, std::span<T> values) {
  static_assert(std::is_arithmetic_v<T>);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size_bytes()));
  if (static_cast<std::size_t>(in.gcount()) != values.size_bytes()) return false;
  if constexpr (std::endian::native != std::endian::little) {
    for (T& v : values) {
      unsigned char bytes[sizeof(T)];
      std::memcpy(bytes, &v, sizeof(T));
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
        std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
      std::memcpy(&v, bytes, sizeof(T));
    }
  }
  return true;
}

}  // namespace hm4sr
