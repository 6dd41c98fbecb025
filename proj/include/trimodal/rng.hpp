#pragma once

// Seeded random streams.
//
// Every random draw in the project goes through SplitMix64 (Steele, Lea and
// Flood 2014; the seeding generator of xoshiro).  Distributions are computed
// here rather than with <random> distributions, whose output is
// implementation-defined, so streams are reproducible across platforms and
// languages:
//   uniform01: top 53 bits of the next word, scaled by 2^-53
//   normal:    Box-Muller on (1 - u1, u2), cosine branch only
//   below(n):  modulo with rejection of the biased tail
// Independent streams are derived from (seed, tag, index) so that sample i of
// a dataset never depends on how many draws sample i-1 consumed.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace trimodal {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal(double mean = 0.0, double stddev = 1.0) {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// FNV-1a, used only to turn stream tags into seeds.
constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline SplitMix64 stream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  SplitMix64 mix(seed ^ fnv1a(tag));
  const std::uint64_t base = mix.next();
  SplitMix64 keyed(base + 0x9E3779B97F4A7C15ULL * (index + 1));
  return SplitMix64(keyed.next());
}

// Fisher-Yates with the stream above.
template <typename Vec>
void shuffle(Vec& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

}  // namespace trimodal
