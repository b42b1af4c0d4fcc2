#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mpa/dsp/audio.hpp"
#include "mpa/model/config.hpp"
#include "mpa/nn/autograd.hpp"
#include "mpa/nn/ops.hpp"
#include "mpa/text/vocab.hpp"
#include "mpa/train/mask.hpp"

namespace mpa::model {

// Head-averaged attention probabilities per decoder layer, filled when a
// trace is passed to decode().
struct DecoderTrace {
  std::vector<nn::Tensor> self_attention;   // [L x L] per layer
  std::vector<nn::Tensor> cross_attention;  // [L x T'] per layer
};

struct ForwardOptions {
  bool train = false;           // enables dropout
  nn::DropoutKey dropout_key{};
  DecoderTrace* trace = nullptr;
};

struct DecoderOutput {
  nn::Var hidden;  // [L x d_model], after the final layer norm
  nn::Var logits;  // [L x vocab_size]
};

// Convolutional-subsampler transformer encoder over log-mel frames and a
// bidirectional transformer decoder (no causal mask) with cross-attention.
// Pre-norm blocks throughout. Parameters live in a ParameterStore keyed by
// layer path; the optional score head adds "head.w" / "head.b".
class MpaModel {
 public:
  MpaModel(ModelConfig config, std::uint64_t init_seed);
  // Adopts `params` after checking every expected name and shape.
  static MpaModel from_parameters(ModelConfig config, nn::ParameterStore params);

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  bool has_score_head() const;
  // Zero weight and bias 0.5 (the middle of the normalized label range).
  void add_score_head();

  // [T x 80] -> [T' x d_model]. Throws InvalidInput when T == 0.
  nn::Var encode_audio(nn::Tape& tape, const dsp::MelSpectrogram& x,
                       const ForwardOptions& opts = {}) const;

  // Full decoder input (BOS ... EOS, possibly with MASK ids) attending to
  // `encoder_states`. Throws InvalidInput for an empty input or ids outside
  // the vocabulary.
  DecoderOutput decode(nn::Tape& tape, std::span<const int> decoder_ids, nn::Var encoder_states,
                       const ForwardOptions& opts = {}) const;

  // [L x d_model] -> [L x 1]. Throws InvalidState without a head.
  nn::Var score_head(nn::Tape& tape, nn::Var hidden) const;

 private:
  MpaModel(ModelConfig config, nn::ParameterStore params);

  nn::Var linear(nn::Tape& tape, nn::Var x, const std::string& prefix) const;
  nn::Var attention(nn::Tape& tape, nn::Var query, nn::Var memory, const std::string& prefix,
                    nn::Tensor* averaged_probs) const;
  nn::Var feed_forward(nn::Tape& tape, nn::Var x, const std::string& prefix,
                       const ForwardOptions& opts, std::uint64_t& dropout_layer) const;
  nn::Var norm(nn::Tape& tape, nn::Var x, const std::string& prefix) const;
  nn::Var drop(nn::Var x, const ForwardOptions& opts, std::uint64_t& dropout_layer) const;

  ModelConfig config_;
  nn::ParameterStore params_;
};

// Expected parameter names and shapes for a configuration (no head).
std::vector<std::pair<std::string, nn::Shape>> parameter_layout(const ModelConfig& config);

// sin/cos positional table [length x d_model].
nn::Tensor sinusoidal_positions(std::size_t length, std::size_t d_model);

// [BOS, y..., EOS] with y's positions in `masked` replaced by MASK.
std::vector<int> decoder_input(const text::TokenSequence& y, const train::MaskPattern& masked);
std::vector<int> decoder_input(const text::TokenSequence& y);

// Cross-entropy over the masked positions against the original tokens.
// Mean over |S| by default (Reduction::Sum gives the summed form).
nn::Var masked_nll(nn::Tape& tape, const MpaModel& model, nn::Var encoder_states,
                   const text::TokenSequence& y, const train::MaskPattern& mask,
                   const ForwardOptions& opts = {}, nn::Reduction reduction = nn::Reduction::Mean);
double masked_nll(const MpaModel& model, const dsp::MelSpectrogram& x,
                  const text::TokenSequence& y, const train::MaskPattern& mask);

}  // namespace mpa::model
