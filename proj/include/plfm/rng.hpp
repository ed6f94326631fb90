#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace plfm {

/// splitmix64 finalizer; good avalanche for seed derivation.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Derive an independent stream seed from (root seed, module tag, index).
/// All randomness in the pipeline funnels through one root seed; every
/// consumer names its stream so runs are reproducible and reorderable.
inline uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t index = 0) {
  uint64_t h = 1469598103934665603ull;  // FNV-1a over the tag
  for (char c : tag) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ull;
  }
  return mix64(root ^ mix64(h) ^ mix64(index + 0x51ed2701ull));
}

inline std::mt19937_64 make_rng(uint64_t root, std::string_view tag, uint64_t index = 0) {
  return std::mt19937_64(derive_seed(root, tag, index));
}

}  // namespace plfm
