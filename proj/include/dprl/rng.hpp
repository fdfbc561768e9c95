#pragma once

#include <cstdint>
#include <random>

namespace dprl {

using Rng = std::mt19937_64;

// Named streams fanned out from one root seed. Two runs that share a root
// seed draw identical values from a given stream regardless of how much the
// other streams were consumed.
enum class Stream : std::uint64_t {
  TaskSampler = 1,
  ComponentInit = 2,
  Exploration = 3,
  ReplaySampling = 4,
  Identification = 5,
  PretrainTasks = 6,
  Reservoir = 7,
  Bootstrap = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based split: (root, stream, counter) -> independent 64-bit seed.
inline std::uint64_t derive_seed(std::uint64_t root, Stream stream,
                                 std::uint64_t counter = 0) {
  std::uint64_t h = splitmix64(root);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h ^ counter);
}

inline Rng make_rng(std::uint64_t root, Stream stream,
                    std::uint64_t counter = 0) {
  return Rng(derive_seed(root, stream, counter));
}

}  // namespace dprl
