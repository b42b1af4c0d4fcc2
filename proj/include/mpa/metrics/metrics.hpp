#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpa/text/vocab.hpp"

namespace mpa::metrics {

// All functions throw InvalidInput on length mismatch.
double mse(std::span<const double> predicted, std::span<const double> reference);

// Population-variance Pearson correlation. Throws UndefinedCorrelation when
// either side is constant (or n < 2).
double pcc(std::span<const double> predicted, std::span<const double> reference);

double token_accuracy(std::span<const int> predictions, std::span<const int> references);

// [lo, hi) except the last bucket of a partition, which is [lo, hi].
struct Bucket {
  double lo = 0.0;
  double hi = 0.0;
  std::string name;
};

std::vector<Bucket> phoneme_buckets();  // 0-0.5 .. 1.5-2.0
std::vector<Bucket> word_buckets();     // 0-1, 2-3, 4-6, 7-9, 10
std::vector<Bucket> buckets_for(text::Level level);

struct BucketAccuracy {
  Bucket bucket;
  std::size_t n = 0;
  std::optional<double> accuracy;  // nullopt when n == 0
};

// Buckets must be contiguous and increasing. A rating outside the partition
// throws InvalidInput.
std::vector<BucketAccuracy> accuracy_by_rating(std::span<const int> predictions,
                                               std::span<const int> references,
                                               std::span<const double> ratings,
                                               std::span<const Bucket> buckets);

// Unit-cost Levenshtein distance over token ids, divided by |ref|.
// Throws InvalidInput for an empty reference.
std::size_t edit_distance(std::span<const int> hyp, std::span<const int> ref);
double wer(std::span<const int> hyp, std::span<const int> ref);

}  // namespace mpa::metrics
