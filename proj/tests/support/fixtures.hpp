#pragma once

// Small synthetic datasets shared by the unit and acceptance tests.

#include <string>
#include <vector>

#include "mpa/dsp/wav.hpp"
#include "mpa/io/synth.hpp"
#include "mpa/text/vocab.hpp"
#include "mpa/train/trainer.hpp"

namespace mpa::testing {

// Reserved tokens followed by the tone inventory, phoneme level.
inline text::Vocabulary tone_vocab() {
  auto t = text::Vocabulary::reserved_tokens();
  for (const auto& s : io::synth::default_inventory().symbols) t.push_back(s);
  return text::Vocabulary::from_tokens(t, text::Level::Phoneme);
}

inline std::vector<train::Example> to_examples(const std::vector<io::synth::Utterance>& us) {
  const auto reserved = static_cast<int>(text::Vocabulary::reserved_tokens().size());
  std::vector<train::Example> out;
  for (const auto& u : us) {
    train::Example e;
    e.id = u.id;
    // Through PCM16, as the CLI sees the synthesized WAV files.
    e.features = dsp::log_mel_spectrogram(dsp::pcm16_round_trip(u.audio), Exec::Serial);
    e.tokens.level = text::Level::Phoneme;
    for (auto t : u.tokens) e.tokens.ids.push_back(static_cast<int>(t) + reserved);
    e.labels = u.labels;
    out.push_back(std::move(e));
  }
  return out;
}

inline model::ModelConfig tiny_config(std::size_t vocab) {
  model::ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_encoder_layers = 1;
  c.n_decoder_layers = 2;
  c.ffn_dim = 32;
  c.dropout = 0.1f;
  c.vocab_size = vocab;
  return c;
}

}  // namespace mpa::testing
