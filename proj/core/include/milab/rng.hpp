#pragma once

#include <cstdint>
#include <random>

namespace milab {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent child seeds from one run
// seed so that each component (task, critic init, evaluation) owns a stream.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum class SeedStream : std::uint64_t { kTask = 1, kCriticInit = 2, kEvaluation = 3, kAuxiliary = 4 };

inline Rng make_rng(std::uint64_t seed, SeedStream stream) {
  return Rng(mix_seed(seed, static_cast<std::uint64_t>(stream)));
}

}  // namespace milab
