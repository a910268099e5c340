#pragma once

#include <cstdint>
#include <random>

namespace mixtensor {

// splitmix64; used only to derive independent child seeds from a base seed.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Child seed for stream `stream` of a base seed. Chained calls give a tree of
// streams: derive_seed(derive_seed(base, rep), lambda_index), etc.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 0x51ED27E3F9DB4B41ULL));
}

using Rng = std::mt19937_64;

}  // namespace mixtensor
