#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpa/dsp/audio.hpp"
#include "mpa/model/mpa_model.hpp"
#include "mpa/parallel.hpp"
#include "mpa/text/vocab.hpp"

namespace mpa::train {

struct TrainConfig {
  float learning_rate = 2e-3f;
  std::size_t warmup_steps = 100;
  // Batch budget in encoder positions plus decoder tokens per utterance.
  std::size_t batch_tokens = 4000;
  std::size_t max_epochs = 100;
  std::size_t max_steps = 0;  // 0: no limit beyond max_epochs
  std::uint64_t seed = 1;
  double clip_norm = 1.0;
  float beta1 = 0.9f;
  float beta2 = 0.98f;

  void validate() const;
  // Inverse square root decay after a linear warmup; `step` counts from 0.
  float learning_rate_at(std::uint64_t step) const;

  std::map<std::string, std::string> to_map() const;  // `train.<field>`
  static TrainConfig from_map(const std::map<std::string, std::string>& kv, TrainConfig base);
};

// One utterance ready for training or scoring.
struct Example {
  std::string id;
  dsp::MelSpectrogram features;
  text::TokenSequence tokens;
  std::optional<std::vector<int>> labels;  // per-token ratings
};

struct LogRecord {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};
using LogSink = std::function<void(const LogRecord&)>;
using WarningSink = std::function<void(const std::string&)>;

struct TrainResult {
  model::MpaModel model;
  std::uint64_t steps = 0;
  std::vector<LogRecord> curve;
};

// Highest rating per level: 2 for phonemes, 10 for words.
double label_max(text::Level level);

// Groups utterances into batches of at most `batch_tokens` (a single larger
// utterance forms its own batch), bucketing by length. Deterministic.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& examples,
                                                   const model::ModelConfig& config,
                                                   std::size_t batch_tokens);

// Masked pre-training. Per batch: sample a mask per utterance, average the
// masked-token NLL over all masked positions, backpropagate, clip, Adam.
// Deterministic for a fixed seed whatever `exec` is. Throws InvalidInput
// for an empty manifest and DivergedError on a non-finite loss.
TrainResult pretrain(const std::vector<Example>& examples, const model::ModelConfig& config,
                     const TrainConfig& train, const LogSink& log = {}, Exec exec = Exec::Parallel);

// Same loop starting from existing weights.
TrainResult pretrain_from(model::MpaModel model, const std::vector<Example>& examples,
                          const TrainConfig& train, const LogSink& log = {},
                          Exec exec = Exec::Parallel);

// Supervised fine-tuning of backbone and score head on the full unmasked
// reference. Labels are divided by label_max(level) and fit with MSE.
// Utterances without labels are skipped through `warn`. Throws InvalidInput
// for labels outside [0, label_max] or a label/token length mismatch.
TrainResult finetune(model::MpaModel model, const std::vector<Example>& examples,
                     text::Level level, const TrainConfig& train, const LogSink& log = {},
                     const WarningSink& warn = {}, Exec exec = Exec::Parallel);

}  // namespace mpa::train
