#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cdl {

using Rng = std::mt19937_64;

// Derives an independent stream seed from the run seed and a fixed label, so
// every module draws from its own stream and adding draws in one module never
// shifts another.
inline std::uint64_t fork_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed ^ h;  // splitmix64 finalizer
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::string_view label) {
  return Rng(fork_seed(seed, label));
}

}  // namespace cdl
