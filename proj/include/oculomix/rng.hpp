#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace oculomix {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent streams used across the library. Values are part of the
// reproducibility contract: changing them changes every seeded output.
enum class Stream : std::uint64_t {
  split = 1,
  synth_patient = 2,
  sampling = 3,
  augmentation = 4,
  init = 5,
  shuffle = 6,
  cohort = 7,
};

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream,
                                           std::uint64_t ordinal = 0) noexcept {
  return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))) + ordinal);
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t ordinal = 0) {
  return Rng(derive_seed(seed, stream, ordinal));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Uniform integer in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace oculomix
