#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace iod {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a, used to fold a stream label into the key
inline constexpr std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char ch : label) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// Independent generator for one (seed, run, label) triple. Workers never share
/// state, so results do not depend on scheduling.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t run_index,
                                 std::string_view label) {
  std::uint64_t key = detail::splitmix64(seed);
  key = detail::splitmix64(key ^ run_index);
  key = detail::splitmix64(key ^ detail::hash_label(label));
  return std::mt19937_64(key);
}

}  // namespace iod
