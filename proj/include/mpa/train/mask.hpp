#pragma once

#include <cstddef>
#include <random>
#include <vector>

namespace mpa::train {

// Indices into the maskable span of a reference (BOS/EOS excluded),
// strictly increasing.
struct MaskPattern {
  std::vector<std::size_t> positions;

  std::size_t size() const { return positions.size(); }
  bool contains(std::size_t i) const;
  // Throws InvalidInput unless 1 <= size <= maskable_len with unique,
  // in-range indices.
  void validate(std::size_t maskable_len) const;

  static MaskPattern single(std::size_t i) { return MaskPattern{{i}}; }
};

// k ~ Uniform{1..maskable_len}, then k distinct positions uniformly without
// replacement. Throws InvalidInput for maskable_len == 0.
MaskPattern sample_mask(std::size_t maskable_len, std::mt19937_64& rng);

}  // namespace mpa::train
