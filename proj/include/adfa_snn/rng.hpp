#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace adfa {

using Engine = std::mt19937_64;

// SplitMix64 finalizer. Used to derive independent stream seeds from a
// master seed plus a stream tag, so adding a stream never shifts another.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = mix64(master);
  for (auto t : tags) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

// Stream tags. Values are part of the reproducibility contract; do not renumber.
namespace stream {
inline constexpr std::uint64_t kWeights = 1;
inline constexpr std::uint64_t kFeedback = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kPrfs = 4;
inline constexpr std::uint64_t kGa = 5;
inline constexpr std::uint64_t kTrial = 6;
inline constexpr std::uint64_t kSelect = 7;
}  // namespace stream

inline Engine make_engine(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  return Engine(derive_seed(master, tags));
}

// Uniform double in [0, 1) from the top 53 bits; independent of the
// standard library's distribution implementation.
inline double uniform01(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& eng, double lo, double hi) { return lo + (hi - lo) * uniform01(eng); }

// Standard normal via Box-Muller (one draw per call, the sine branch is discarded).
inline double normal01(Engine& eng) {
  const double u1 = 1.0 - uniform01(eng);  // (0, 1]
  const double u2 = uniform01(eng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace adfa
