#include "mpa/score/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include "mpa/error.hpp"
#include "mpa/nn/ops.hpp"

namespace mpa::score {

using nn::Tape;
using nn::Tensor;

std::string_view to_string(Mode m) { return m == Mode::Unsupervised ? "unsup" : "sup"; }

namespace {

// Reserved ids are never predicted unless the vocabulary has nothing else.
int best_token(std::span<const float> logits) {
  const std::size_t first = logits.size() > text::kNumReserved ? text::kNumReserved : 0;
  int best = static_cast<int>(first);
  for (std::size_t c = first + 1; c < logits.size(); ++c) {
    if (logits[c] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  return best;
}

}  // namespace

Tensor encode(const model::MpaModel& model, const dsp::MelSpectrogram& x) {
  Tape tape(false);
  return model.encode_audio(tape, x).value();
}

MaskedPrediction predict_masked(const model::MpaModel& model, const Tensor& encoder_states,
                                const text::TokenSequence& y, std::size_t i,
                                model::DecoderTrace* trace) {
  if (i >= y.size()) {
    throw InvalidInput("token position " + std::to_string(i) + " out of range for " +
                       std::to_string(y.size()) + " tokens");
  }
  Tape tape(false);
  nn::Var enc = tape.constant(encoder_states);
  const auto input = model::decoder_input(y, train::MaskPattern::single(i));
  model::ForwardOptions opts;
  opts.trace = trace;
  const auto out = model.decode(tape, input, enc, opts);
  const auto row = out.logits.value().row(i + 1);
  return {nn::log_softmax_at(row, y.ids[i]), best_token(row)};
}

double score_token(const model::MpaModel& model, const dsp::MelSpectrogram& x,
                   const text::TokenSequence& y, std::size_t i) {
  if (i >= y.size()) {
    throw InvalidInput("token position " + std::to_string(i) + " out of range for " +
                       std::to_string(y.size()) + " tokens");
  }
  return predict_masked(model, encode(model, x), y, i).log_likelihood;
}

double scale_score(double log_likelihood, double scale_max) {
  if (log_likelihood > 0.0) throw InvalidInput("log-likelihood must be <= 0");
  return scale_max * std::exp(log_likelihood);
}

ScoreReport score_utterance(const model::MpaModel& model, const Tensor& encoder_states,
                            const text::TokenSequence& y, double scale_max,
                            const std::string& utterance_id, Exec exec) {
  if (y.empty()) throw InvalidInput("cannot score an empty reference");
  std::vector<MaskedPrediction> preds(y.size());
  parallel_for(y.size(), exec,
                 [&](std::size_t i) { preds[i] = predict_masked(model, encoder_states, y, i); });
  ScoreReport r;
  r.utterance_id = utterance_id;
  r.level = y.level;
  r.mode = Mode::Unsupervised;
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    // Rounding can leave a near-certain log-probability a hair above zero.
    const double ll = std::min(preds[i].log_likelihood, 0.0);
    r.tokens.push_back({i, y.ids[i], ll, scale_score(ll, scale_max), preds[i].argmax});
    total += ll;
  }
  r.mean_log_likelihood = total / static_cast<double>(y.size());
  return r;
}

ScoreReport score_utterance(const model::MpaModel& model, const dsp::MelSpectrogram& x,
                            const text::TokenSequence& y, double scale_max,
                            const std::string& utterance_id, Exec exec) {
  if (y.empty()) throw InvalidInput("cannot score an empty reference");
  return score_utterance(model, encode(model, x), y, scale_max, utterance_id, exec);
}

ScoreReport predict_supervised_scores(const model::MpaModel& model, const dsp::MelSpectrogram& x,
                                      const text::TokenSequence& y, double scale_max,
                                      const std::string& utterance_id) {
  if (!model.has_score_head()) throw InvalidState("checkpoint has no fine-tuned score head");
  if (y.empty()) throw InvalidInput("cannot score an empty reference");
  Tape tape(false);
  nn::Var enc = model.encode_audio(tape, x);
  const auto out = model.decode(tape, model::decoder_input(y), enc);
  const Tensor& head = model.score_head(tape, out.hidden).value();
  ScoreReport r;
  r.utterance_id = utterance_id;
  r.level = y.level;
  r.mode = Mode::Supervised;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double s = std::clamp(static_cast<double>(head[i + 1]) * scale_max, 0.0, scale_max);
    r.tokens.push_back({i, y.ids[i], std::nullopt, s, std::nullopt});
  }
  return r;
}

AttentionMap export_attention(const model::MpaModel& model, const dsp::MelSpectrogram& x,
                              const text::TokenSequence& y, Exec exec) {
  if (y.empty()) throw InvalidInput("cannot export attention for an empty reference");
  const Tensor enc = encode(model, x);
  const std::size_t frames = enc.dim(0);
  AttentionMap map{Tensor({y.size(), frames})};
  parallel_for(y.size(), exec, [&](std::size_t i) {
    model::DecoderTrace trace;
    predict_masked(model, enc, y, i, &trace);
    const auto row = trace.cross_attention.back().row(i + 1);
    std::copy(row.begin(), row.end(), map.weights.row(i).begin());
  });
  return map;
}

DecodeResult mask_predict_decode(const model::MpaModel& model, const dsp::MelSpectrogram& x,
                                 std::size_t n, std::size_t steps,
                                 const std::function<void(const std::string&)>& warn) {
  if (n == 0) throw InvalidInput("decode length must be positive");
  if (steps == 0) throw InvalidInput("decode steps must be positive");
  if (steps > n) {
    if (warn) {
      warn("steps " + std::to_string(steps) + " > length " + std::to_string(n) + "; using " +
           std::to_string(n));
    }
    steps = n;
  }
  const Tensor enc = encode(model, x);
  const std::size_t per_step = (n + steps - 1) / steps;

  DecodeResult result;
  result.steps = steps;
  std::vector<int> current(n, text::kMask);
  std::vector<bool> fixed(n, false);
  std::size_t remaining = n;
  for (std::size_t s = 0; s < steps && remaining > 0; ++s) {
    Tape tape(false);
    nn::Var e = tape.constant(enc);
    std::vector<int> input;
    input.reserve(n + 2);
    input.push_back(text::kBos);
    input.insert(input.end(), current.begin(), current.end());
    input.push_back(text::kEos);
    const auto out = model.decode(tape, input, e);
    const Tensor& logits = out.logits.value();

    struct Candidate {
      std::size_t position;
      int token;
      double log_prob;
    };
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < n; ++i) {
      if (fixed[i]) continue;
      const auto row = logits.row(i + 1);
      const int tok = best_token(row);
      cands.push_back({i, tok, nn::log_softmax_at(row, tok)});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.log_prob > b.log_prob;
    });
    const std::size_t take = (s + 1 == steps) ? remaining : std::min(per_step, remaining);
    for (std::size_t c = 0; c < take; ++c) {
      current[cands[c].position] = cands[c].token;
      fixed[cands[c].position] = true;
    }
    remaining -= take;
    result.committed.push_back(take);
  }
  result.tokens.ids = std::move(current);
  return result;
}

}  // namespace mpa::score
