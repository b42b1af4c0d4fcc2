#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mpa/metrics/metrics.hpp"
#include "mpa/nn/tensor.hpp"
#include "mpa/score/scorer.hpp"
#include "mpa/text/vocab.hpp"
#include "mpa/train/trainer.hpp"

namespace mpa::io {

// One JSON object per line, no trailing newline. Token strings are added
// when `vocab` is given; ids are always present.
std::string format_score_report(const score::ScoreReport& r, const text::Vocabulary* vocab = nullptr);
// Throws FormatError.
score::ScoreReport parse_score_report(std::string_view line, std::string_view origin = "<report>");

// {"step":..,"epoch":..,"loss":..,"lr":..,"wall_ms":..}
std::string format_log_record(const train::LogRecord& rec);

// {"metric":..,"value":..,"n":..,"buckets":[...]}; value null when absent.
struct MetricRecord {
  std::string metric;
  std::optional<double> value;
  std::size_t n = 0;
  std::optional<std::vector<metrics::BucketAccuracy>> buckets;
  std::optional<std::string> warning;
};
std::string format_metric(const MetricRecord& m);

struct DecodeRecord {
  std::string id;
  std::string hypothesis;
  std::string reference;
  std::size_t steps = 0;
  std::vector<std::size_t> committed;
  double token_accuracy = 0.0;
  double wer = 0.0;
};
std::string format_decode_record(const DecodeRecord& d);

// Row per token, `frame_0..frame_{T'-1}` columns, full float precision.
std::string attention_csv(const nn::Tensor& weights, const std::vector<std::string>& row_labels);
// Binary 8-bit PGM (P5), one pixel per (token, frame); each row is scaled
// by its own maximum so the peak is 255.
std::string attention_pgm(const nn::Tensor& weights);

}  // namespace mpa::io
