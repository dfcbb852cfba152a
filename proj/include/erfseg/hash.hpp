#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace erfseg {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

/// 64-bit FNV-1a; `h` continues a previous digest.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
  return fnv1a(std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()), h);
}

/// SplitMix64 finaliser; used to derive independent generator seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the stream identified by (seed, key).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) { return splitmix64(seed ^ splitmix64(key)); }

}  // namespace erfseg
