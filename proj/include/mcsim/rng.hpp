#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mcsim {

/// Root of all simulation randomness. Component streams are derived from the
/// root seed and a fixed label, so streams are independent of each other and
/// of the order in which components ask for them.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::mt19937_64 stream(std::string_view label, std::uint64_t index = 0) const {
    // FNV-1a over the label, mixed with seed and index via splitmix64.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return std::mt19937_64(mix(seed_ ^ mix(h ^ mix(index))));
  }

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t seed_;
};

// Portable bounded draw in [0, n); std distributions differ across
// standard libraries and would break byte-identical reports.
inline std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

inline bool draw_chance(std::mt19937_64& rng, std::uint64_t num, std::uint64_t den) {
  return draw_below(rng, den) < num;
}

}  // namespace mcsim
