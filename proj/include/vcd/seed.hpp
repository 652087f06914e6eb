#pragma once

#include <cstdint>
#include <string_view>

namespace vcd {

// Per-item seeds are derived from (global seed, tags...) so that results do
// not depend on iteration or thread scheduling order.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, Rest... rest);
template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, Rest... rest);

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, Rest... rest) {
  return derive_seed(splitmix64(seed) ^ fnv1a64(tag), rest...);
}

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, Rest... rest) {
  return derive_seed(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL), rest...);
}

}  // namespace vcd
