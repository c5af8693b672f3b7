#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace mvda::rng {

// SplitMix64 finalizer (Steele, Lea, Flood 2014). Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a child key from a parent key and a path of integer tags, e.g.
// derive(seed, {kTagRff, view}). Every derivation step is a keyed mix so
// sibling streams are independent for practical purposes.
constexpr std::uint64_t derive(std::uint64_t key,
                               std::initializer_list<std::uint64_t> path) noexcept {
  for (std::uint64_t tag : path) {
    key = mix64(key ^ mix64(tag + 0x632be59bd9b4e019ULL));
  }
  return key;
}

// Stream tags. Fixed values: changing one changes every derived draw.
inline constexpr std::uint64_t kTagSynthCenters = 0x11;
inline constexpr std::uint64_t kTagSynthMap = 0x12;
inline constexpr std::uint64_t kTagSynthNoise = 0x13;
inline constexpr std::uint64_t kTagRffFrequency = 0x21;
inline constexpr std::uint64_t kTagRffPhase = 0x22;
inline constexpr std::uint64_t kTagCrawford = 0x31;
inline constexpr std::uint64_t kTagTrial = 0x41;

// Counter-based generator: draw i of a stream is a pure function of
// (key, i), so results do not depend on call order or thread schedule.
//
// uniform(i): top 53 bits of mix64(key ^ mix64(i)) scaled to [0, 1).
// normal(i):  Box-Muller, cosine branch, using uniform draws 2i and 2i+1.
class CounterStream {
 public:
  constexpr explicit CounterStream(std::uint64_t key) noexcept : key_(key) {}

  constexpr std::uint64_t key() const noexcept { return key_; }

  constexpr std::uint64_t bits(std::uint64_t index) const noexcept {
    return mix64(key_ ^ mix64(index));
  }

  double uniform(std::uint64_t index) const noexcept {
    return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
  }

  double normal(std::uint64_t index) const noexcept {
    const double u1 = 1.0 - uniform(2 * index);  // (0, 1]
    const double u2 = uniform(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

}  // namespace mvda::rng
