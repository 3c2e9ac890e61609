// Copyright (c) 2026, HM4SR contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace hm4sr {

// Counter-based randomness: every draw is a pure function of a 64-bit key and
// a counter, so results never depend on how many draws happened before.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

/// Key for one randomized site at a given (seed, epoch, step).
constexpr std::uint64_t site_key(std::uint64_t seed, std::uint64_t epoch,
                                 std::uint64_t step,
                                 std::string_view site) noexcept {
  return mix_key(mix_key(mix_key(seed, epoch), step), fnv1a(site));
}

/// Uniform draw in [0, 1) for (key, counter), 53-bit resolution.
constexpr double counter_uniform(std::uint64_t key,
                                 std::uint64_t counter) noexcept {
  return static_cast<double>(mix_key(key, counter) >> 11) * 0x1.0p-53;
}

}  // namespace hm4sr
