#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mlqmc {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the stream identified by a tuple of keys (e.g. master seed,
/// method, level, shift, sample). Distinct tuples give unrelated streams.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x6a09e667f3bcc908ULL;
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k));
  return h;
}

/// Uniform double in [0,1) from the top 53 bits.
inline double uniform_closed_open(std::mt19937_64& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

/// Uniform double in (0,1), never exactly 0 or 1.
inline double uniform_open(std::mt19937_64& eng) {
  return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace mlqmc
