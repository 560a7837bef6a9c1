#pragma once

// Seeded random streams. Every consumer derives its own generator from
// (master seed, purpose, counter), so a step's draws do not depend on how many
// numbers any other consumer pulled before it.

#include <cstdint>
#include <random>

namespace svid {

using Rng = std::mt19937_64;

enum class Stream : std::uint64_t {
  init = 1,
  sample = 2,   // image choice + crop position
  noise = 3,    // corruption of the training input
  mask = 4,     // degradation mask
  pair = 5,     // second independent corruption (noise2noise)
  eval = 6,     // fixed corruption of evaluation images
  split = 7,    // dataset shuffle
  synth = 8,    // synthetic images and CLI corruption
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t stream_seed(std::uint64_t master, Stream purpose, std::uint64_t counter) {
  return mix64(mix64(mix64(master) ^ static_cast<std::uint64_t>(purpose)) ^ counter);
}

inline Rng make_stream(std::uint64_t master, Stream purpose, std::uint64_t counter = 0) {
  return Rng(stream_seed(master, purpose, counter));
}

}  // namespace svid
