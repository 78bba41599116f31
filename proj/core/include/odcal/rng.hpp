#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace odcal {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a over the bytes of a name.
constexpr std::uint64_t fnv1a64(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Named substream of a base seed, e.g. derive_seed(seed, "train/ep12").
/// Components re-run in isolation draw the same numbers as inside a full run.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::string_view name) noexcept {
  return splitmix64(base ^ splitmix64(fnv1a64(name)));
}

/// Uniform double in [0, 1) with 53 random bits; identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller on uniform01 (portable, unlike std::normal_distribution).
double standard_normal(Rng& rng);

}  // namespace odcal
