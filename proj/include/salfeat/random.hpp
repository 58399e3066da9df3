#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace salfeat {

using Rng = std::mt19937_64;

// 64-bit FNV-1a; stable across platforms and runs.
constexpr std::uint64_t fnv1a(std::string_view text,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Per-component stream seed: run seed xor the hash of a component id, mixed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view component) {
  return splitmix64(seed ^ fnv1a(component));
}

template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t seed, std::string_view first, Parts... rest) {
  std::uint64_t s = derive_seed(seed, first);
  ((s = derive_seed(s, std::string_view(rest))), ...);
  return s;
}

// Uniform index in [0, n) by rejection; independent of the standard library's
// distribution implementation so sampled streams are portable.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace salfeat
