#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oner {

// Mixes a seed with a stream id so derived generators are decorrelated.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + stream * 0x9E3779B97F4A7C15ULL + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Uniform in [0, 1) with 53 bits of mantissa. Hand-rolled instead of
// std::uniform_real_distribution so the stream is identical on every
// platform and standard library.
inline double uniform_unit(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Uniform in [-half_width, half_width).
inline double uniform_symmetric(std::mt19937_64& gen, double half_width) {
  return (2.0 * uniform_unit(gen) - 1.0) * half_width;
}

inline std::vector<double> uniform_symmetric_vec(std::mt19937_64& gen,
                                                 std::size_t n,
                                                 double half_width) {
  std::vector<double> out(n);
  for (double& v : out) v = uniform_symmetric(gen, half_width);
  return out;
}

// Standard normal via Box-Muller, again platform-independent.
inline double normal_unit(std::mt19937_64& gen) {
  double u1 = uniform_unit(gen);
  double u2 = uniform_unit(gen);
  while (u1 <= 0.0) u1 = uniform_unit(gen);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace oner
