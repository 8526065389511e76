#pragma once

#include <cstdint>

namespace scope {

/// SplitMix64 finalizer. A bijection on 64-bit integers.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent sub-stream of `base` identified by `tag`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  return splitmix64(splitmix64(base) ^ splitmix64(tag ^ 0x5C0BE5EEDULL));
}

/// Seed for item (`major`, `minor`) of a run, e.g. (generation, candidate).
/// For fixed `base` this is injective over major, minor < 2^32.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t major, std::uint64_t minor) {
  return splitmix64(splitmix64(base) ^ ((major << 32) | (minor & 0xFFFFFFFFULL)));
}

// Tags separating the random streams drawn from one master seed.
inline constexpr std::uint64_t kOptimizerStream = 1;
inline constexpr std::uint64_t kEpisodeStream = 2;
inline constexpr std::uint64_t kStickyStream = 3;
inline constexpr std::uint64_t kTrialStream = 4;

}  // namespace scope
