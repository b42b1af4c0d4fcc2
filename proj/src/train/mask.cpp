#include "mpa/train/mask.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "mpa/error.hpp"

namespace mpa::train {

bool MaskPattern::contains(std::size_t i) const {
  return std::binary_search(positions.begin(), positions.end(), i);
}

void MaskPattern::validate(std::size_t maskable_len) const {
  if (positions.empty()) throw InvalidInput("mask pattern is empty");
  if (positions.size() > maskable_len) {
    throw InvalidInput("mask pattern has " + std::to_string(positions.size()) +
                       " positions for a span of " + std::to_string(maskable_len));
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] >= maskable_len) {
      throw InvalidInput("mask position " + std::to_string(positions[i]) + " out of range");
    }
    if (i > 0 && positions[i] <= positions[i - 1]) {
      throw InvalidInput("mask positions must be unique and increasing");
    }
  }
}

MaskPattern sample_mask(std::size_t maskable_len, std::mt19937_64& rng) {
  if (maskable_len == 0) throw InvalidInput("cannot sample a mask over an empty span");
  std::uniform_int_distribution<std::size_t> count_dist(1, maskable_len);
  const std::size_t k = count_dist(rng);
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  std::vector<std::size_t> idx(maskable_len);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, maskable_len - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  MaskPattern m;
  m.positions.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(m.positions.begin(), m.positions.end());
  return m;
}

}  // namespace mpa::train
