#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace graphau {

// FNV-1a, used to derive independent per-frame random streams from
// (run seed, frame_id) so results do not depend on iteration order.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0) {
  std::uint64_t h = 14695981039346656037ull ^ (seed * 0x9e3779b97f4a7c15ull);
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::mt19937_64 frame_rng(std::uint64_t seed, std::string_view frame_id) {
  return std::mt19937_64(fnv1a64(frame_id, seed));
}

}  // namespace graphau
