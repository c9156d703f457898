#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace gino {

/// Seed of the named sub-stream `name` of a run seeded with `seed` (FNV-1a name hash,
/// splitmix64 finalizer). Streams with different names are independent of each other.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed ^ h ^ (index * 0x9E3779B97F4A7C15ULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  return std::mt19937_64(stream_seed(seed, name, index));
}

}  // namespace gino
