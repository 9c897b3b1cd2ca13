#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sgxp {

using Rng = std::mt19937_64;

/// Deterministic child seed: hash of the parent seed and a purpose string.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed, std::string_view purpose) { return Rng(derive_seed(seed, purpose)); }

/// Uniform double in [0, 1) built from the top 53 bits; stable across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace sgxp
