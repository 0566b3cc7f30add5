#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace csvgd {

// mt19937_64 is fully specified by the standard; the helpers below avoid the
// implementation-defined std:: distributions so streams match across
// toolchains and the generator state alone captures everything.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Standard normal by Box-Muller; consumes two draws, keeps no cached value.
double standard_normal(Rng& rng);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

}  // namespace csvgd
