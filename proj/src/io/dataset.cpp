#include "mpa/io/dataset.hpp"

#include "mpa/dsp/wav.hpp"
#include "mpa/error.hpp"

namespace mpa::io {

text::TokenSequence entry_tokens(const ManifestEntry& entry, const text::Vocabulary& vocab,
                                 const text::Lexicon* lexicon) {
  if (entry.level == vocab.level()) return text::encode(entry.text, vocab);
  if (entry.level == text::Level::Word && vocab.level() == text::Level::Phoneme) {
    if (!lexicon) {
      throw InvalidInput("entry '" + entry.id + "' is word-level but the vocabulary is phoneme-level "
                         "and no lexicon was given");
    }
    if (entry.labels) {
      throw InvalidInput("entry '" + entry.id + "' has word ratings but would be phonemized");
    }
    const auto words = text::split_whitespace(entry.text);
    return text::phonemize(words, *lexicon, vocab);
  }
  throw InvalidInput("entry '" + entry.id + "' is " + std::string(text::to_string(entry.level)) +
                     "-level but the vocabulary is " + std::string(text::to_string(vocab.level())) +
                     "-level");
}

std::vector<train::Example> load_examples(const std::vector<ManifestEntry>& entries,
                                          const text::Vocabulary& vocab,
                                          const text::Lexicon* lexicon, Exec exec) {
  std::vector<train::Example> out(entries.size());
  // Feature extraction runs serially inside each task so the outer loop
  // owns the threads.
  parallel_for(entries.size(), exec, [&](std::size_t i) {
    const auto& e = entries[i];
    dsp::Waveform w = dsp::read_wav(e.audio);
    if (w.sample_rate_hz != dsp::kFeatureRateHz) w = dsp::resample(w, dsp::kFeatureRateHz);
    train::Example ex;
    ex.id = e.id;
    ex.features = dsp::log_mel_spectrogram(w, Exec::Serial);
    ex.tokens = entry_tokens(e, vocab, lexicon);
    ex.labels = e.labels;
    if (ex.tokens.empty()) throw InvalidInput("entry '" + e.id + "' has an empty transcript");
    out[i] = std::move(ex);
  });
  return out;
}

}  // namespace mpa::io
