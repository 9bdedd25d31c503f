#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace fairdispatch {

using Rng = std::mt19937_64;

// Mixes a base seed with a stream tag so derived generators are independent.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform double in [0, 1). Avoids std::uniform_real_distribution so the
// stream is identical across standard libraries.
inline double rand_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rand_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_unit(rng);
}

// Uniform integer in [0, n). n must be positive.
inline std::uint64_t rand_index(Rng& rng, std::uint64_t n) {
  return static_cast<std::uint64_t>(rand_unit(rng) * static_cast<double>(n)) % n;
}

// Knuth's product method; fine for the small rates used here.
inline int rand_poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  int k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rand_unit(rng);
  } while (p > limit);
  return k - 1;
}

// FNV-1a over a byte string; used for config hashes in run manifests.
inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace fairdispatch
