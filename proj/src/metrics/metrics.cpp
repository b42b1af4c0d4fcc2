#include "mpa/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpa/error.hpp"

namespace mpa::metrics {
namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidInput(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                       std::to_string(b) + ")");
  }
}

}  // namespace

double mse(std::span<const double> predicted, std::span<const double> reference) {
  require_same_length(predicted.size(), reference.size(), "mse");
  if (predicted.empty()) throw InvalidInput("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - reference[i];
    acc += d * d;
  }
  return acc / static_cast<double>(predicted.size());
}

double pcc(std::span<const double> predicted, std::span<const double> reference) {
  require_same_length(predicted.size(), reference.size(), "pcc");
  const std::size_t n = predicted.size();
  if (n < 2) throw UndefinedCorrelation("pcc needs at least two values");
  const double mx = std::accumulate(predicted.begin(), predicted.end(), 0.0) / n;
  const double my = std::accumulate(reference.begin(), reference.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = predicted[i] - mx;
    const double dy = reference[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  // Exact-constant check; the mean of a constant sequence can differ from
  // its elements by one ulp, so test the data rather than sxx.
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
  };
  if (constant(predicted) || constant(reference) || sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelation("pcc undefined for a constant sequence");
  }
  // The 1/n factors cancel.
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

double token_accuracy(std::span<const int> predictions, std::span<const int> references) {
  require_same_length(predictions.size(), references.size(), "token_accuracy");
  if (predictions.empty()) throw InvalidInput("token_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == references[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

std::vector<Bucket> phoneme_buckets() {
  return {{0.0, 0.5, "0-0.5"}, {0.5, 1.0, "0.5-1.0"}, {1.0, 1.5, "1.0-1.5"}, {1.5, 2.0, "1.5-2.0"}};
}

std::vector<Bucket> word_buckets() {
  // Integer ratings: [0,2) = 0-1, ..., closed [10,10] = 10.
  return {{0, 2, "0-1"}, {2, 4, "2-3"}, {4, 7, "4-6"}, {7, 10, "7-9"}, {10, 10, "10"}};
}

std::vector<Bucket> buckets_for(text::Level level) {
  return level == text::Level::Phoneme ? phoneme_buckets() : word_buckets();
}

std::vector<BucketAccuracy> accuracy_by_rating(std::span<const int> predictions,
                                               std::span<const int> references,
                                               std::span<const double> ratings,
                                               std::span<const Bucket> buckets) {
  require_same_length(predictions.size(), references.size(), "accuracy_by_rating");
  require_same_length(predictions.size(), ratings.size(), "accuracy_by_rating ratings");
  if (buckets.empty()) throw InvalidInput("accuracy_by_rating: no buckets");
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    const bool last = b + 1 == buckets.size();
    if (!(buckets[b].lo < buckets[b].hi || (last && buckets[b].lo == buckets[b].hi))) {
      throw InvalidInput("bucket '" + buckets[b].name + "' is empty or inverted");
    }
    if (b > 0 && buckets[b].lo != buckets[b - 1].hi) {
      throw InvalidInput("buckets are not contiguous at '" + buckets[b].name + "'");
    }
  }

  std::vector<BucketAccuracy> out;
  std::vector<std::size_t> hits(buckets.size(), 0);
  for (const auto& b : buckets) out.push_back({b, 0, std::nullopt});

  for (std::size_t i = 0; i < ratings.size(); ++i) {
    const double r = ratings[i];
    std::size_t found = buckets.size();
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      const bool last = b + 1 == buckets.size();
      if (r >= buckets[b].lo && (r < buckets[b].hi || (last && r <= buckets[b].hi))) {
        found = b;
        break;
      }
    }
    if (found == buckets.size()) {
      throw InvalidInput("rating " + std::to_string(r) + " at index " + std::to_string(i) +
                         " is outside every bucket");
    }
    ++out[found].n;
    hits[found] += predictions[i] == references[i];
  }
  for (std::size_t b = 0; b < out.size(); ++b) {
    if (out[b].n > 0) out[b].accuracy = static_cast<double>(hits[b]) / out[b].n;
  }
  return out;
}

std::size_t edit_distance(std::span<const int> hyp, std::span<const int> ref) {
  // Two-row DP.
  std::vector<std::size_t> prev(ref.size() + 1), cur(ref.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] != ref[j - 1]);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

double wer(std::span<const int> hyp, std::span<const int> ref) {
  if (ref.empty()) throw InvalidInput("wer: empty reference");
  return static_cast<double>(edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

}  // namespace mpa::metrics
