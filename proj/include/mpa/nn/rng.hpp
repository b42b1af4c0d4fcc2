#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mpa::nn {

std::uint64_t splitmix64(std::uint64_t x);

// Order-sensitive hash of a tuple of counters.
std::uint64_t mix_key(std::initializer_list<std::uint64_t> parts);

// Uniform in [0, 1) from the top 24 bits.
float unit_float(std::uint64_t bits);

// Standard engine seeded from a counter tuple, so independent streams (per
// step, per utterance) never depend on how many draws another stream made.
std::mt19937_64 make_engine(std::initializer_list<std::uint64_t> parts);

// Dropout randomness is a pure function of (seed, layer, step, stream, index).
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t layer = 0;
  std::uint64_t step = 0;
  std::uint64_t stream = 0;

  DropoutKey with_layer(std::uint64_t l) const { return {seed, l, step, stream}; }
};

}  // namespace mpa::nn
