#pragma once

// Counter-based random streams. Every draw is a pure function of
// (key, counter), so trials can be evaluated in any order, on any number of
// threads, scalar or vectorised, and still produce identical numbers.

#include <bit>
#include <cstdint>

namespace bletrack::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derive a stream key from a seed and up to two stream coordinates
/// (e.g. cell index, trial index).
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a,
                                   std::uint64_t b = 0) {
  std::uint64_t k = splitmix64(seed + kGolden);
  k = splitmix64(k ^ (a + 0x632BE59BD9B4E019ULL));
  k = splitmix64(k ^ (b + 0x85157AF5ULL));
  return k;
}

constexpr std::uint64_t draw_bits(std::uint64_t key, std::uint64_t counter) {
  return splitmix64(key + (counter + 1) * kGolden);
}

/// Uniform in [0, 1) with 52 bits of resolution. Built by exponent stuffing
/// so that the vector kernels can reproduce it bit-for-bit.
inline double bits_to_unit(std::uint64_t bits) {
  return std::bit_cast<double>((bits >> 12) | 0x3FF0000000000000ULL) - 1.0;
}

inline double uniform(std::uint64_t key, std::uint64_t counter) {
  return bits_to_unit(draw_bits(key, counter));
}

}  // namespace bletrack::rng
