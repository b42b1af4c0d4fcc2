#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mpa/dsp/audio.hpp"
#include "mpa/model/mpa_model.hpp"
#include "mpa/parallel.hpp"
#include "mpa/text/vocab.hpp"

namespace mpa::score {

enum class Mode { Unsupervised, Supervised };
std::string_view to_string(Mode m);

struct TokenScore {
  std::size_t position = 0;
  int token = 0;
  // Mask-predict log-likelihood (unsupervised mode only); always <= 0.
  std::optional<double> log_likelihood;
  double scaled_score = 0.0;  // in [0, scale_max]
  // Argmax of the masked-position distribution (unsupervised mode only).
  std::optional<int> predicted;

  friend bool operator==(const TokenScore&, const TokenScore&) = default;
};

struct ScoreReport {
  std::string utterance_id;
  text::Level level = text::Level::Word;
  Mode mode = Mode::Unsupervised;
  std::vector<TokenScore> tokens;  // one per reference token, BOS/EOS excluded
  std::optional<double> mean_log_likelihood;

  friend bool operator==(const ScoreReport&, const ScoreReport&) = default;
};

// |Y| x T' head-averaged weights of the last cross-attention layer; row i
// comes from the pass in which token i was masked.
struct AttentionMap {
  nn::Tensor weights;
};

// Output of one forward pass with exactly position i masked.
struct MaskedPrediction {
  double log_likelihood = 0.0;  // log P(y_i | X, Y \ i)
  int argmax = 0;               // best non-reserved token
};

// Encoder states for x, computed without recording gradients.
nn::Tensor encode(const model::MpaModel& model, const dsp::MelSpectrogram& x);

MaskedPrediction predict_masked(const model::MpaModel& model, const nn::Tensor& encoder_states,
                                const text::TokenSequence& y, std::size_t i,
                                model::DecoderTrace* trace = nullptr);

// log P(y_i | X, Y \ i). Throws InvalidInput for i out of range.
double score_token(const model::MpaModel& model, const dsp::MelSpectrogram& x,
                   const text::TokenSequence& y, std::size_t i);

// scale_max * exp(ll). Throws InvalidInput for ll > 0.
double scale_score(double log_likelihood, double scale_max);

// |y| independent single-mask passes over one shared encoder output.
ScoreReport score_utterance(const model::MpaModel& model, const dsp::MelSpectrogram& x,
                            const text::TokenSequence& y, double scale_max,
                            const std::string& utterance_id = {}, Exec exec = Exec::Parallel);

// Same, reusing precomputed encoder states.
ScoreReport score_utterance(const model::MpaModel& model, const nn::Tensor& encoder_states,
                            const text::TokenSequence& y, double scale_max,
                            const std::string& utterance_id = {}, Exec exec = Exec::Parallel);

// Fine-tuned head on the full unmasked text; outputs rescaled by scale_max
// and clipped to [0, scale_max]. Throws InvalidState without a head.
ScoreReport predict_supervised_scores(const model::MpaModel& model, const dsp::MelSpectrogram& x,
                                      const text::TokenSequence& y, double scale_max,
                                      const std::string& utterance_id = {});

AttentionMap export_attention(const model::MpaModel& model, const dsp::MelSpectrogram& x,
                              const text::TokenSequence& y, Exec exec = Exec::Parallel);

struct DecodeResult {
  text::TokenSequence tokens;
  std::size_t steps = 0;                 // after clamping to n
  std::vector<std::size_t> committed;    // tokens fixed at each step
};

// Iterative mask-predict: start from n MASKs; each step runs one pass and
// permanently commits the ceil(n / steps) most confident still-masked
// positions (the last step takes all that remain). Ties go to the lower
// position. steps > n is clamped to n with a warning.
DecodeResult mask_predict_decode(const model::MpaModel& model, const dsp::MelSpectrogram& x,
                                 std::size_t n, std::size_t steps,
                                 const std::function<void(const std::string&)>& warn = {});

}  // namespace mpa::score
