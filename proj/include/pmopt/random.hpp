#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>

// Counter-based randomness: every draw is a pure function of its key, so results
// do not depend on evaluation order or worker count.

namespace pmopt {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Hash of a key tuple; each component is folded through splitmix64.
inline constexpr std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ull;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

/// Top 53 bits mapped to [0,1).
inline constexpr double unit_interval(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Seed of an independent stream derived from a parent seed.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return hash_key({seed, 0x5eedull, stream});
}

}  // namespace pmopt
