#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace samlab {

/// The engine behind every random draw. mt19937_64 output is fixed by the
/// standard; the conversions below are written out so draws are identical
/// across standard libraries.
using Rng = std::mt19937_64;

/// Seed for an independent stream keyed by (seed, tag, index).
std::uint64_t stream_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

inline Rng make_stream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
  return Rng(stream_seed(seed, tag, index));
}

/// Uniform on [0, 1) with 53 random bits.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
/// Standard normal via Box-Muller (one draw per call).
double standard_normal(Rng& rng);
bool bernoulli(Rng& rng, double p);
/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

}  // namespace samlab
