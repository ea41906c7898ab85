#pragma once

#include <cstdint>
#include <random>

namespace uscore {

/// The only random engine used by the library. Always passed explicitly.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer; mixes a base seed with a stream index so per-item
/// generators are independent of iteration order.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed, stream));
}

}  // namespace uscore
