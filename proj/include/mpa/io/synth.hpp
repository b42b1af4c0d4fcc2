#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mpa/dsp/audio.hpp"
#include "mpa/train/trainer.hpp"

// Synthetic tone corpus: every token is a pure tone from a fixed
// token -> frequency map, so the audio/text alignment is known exactly.
namespace mpa::io::synth {

struct ToneInventory {
  std::vector<std::string> symbols;
  std::vector<double> frequencies_hz;
};

// Ten symbols with geometrically spaced tones from 300 Hz.
const ToneInventory& default_inventory();

struct Options {
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 6;
  double tone_ms = 100.0;
  double gap_ms = 50.0;
  double edge_ms = 50.0;  // leading and trailing silence
  double noise_rms = 0.003;
  // Token sequences follow a first-order chain: with this probability the
  // next symbol is one of the two successors (s+1, s+3 mod |inventory|) of
  // the previous one, otherwise uniform. Gives the text a learnable context.
  double grammar_strength = 0.75;
  int sample_rate_hz = dsp::kFeatureRateHz;
  // Labeled splits only: probability that a token is mispronounced.
  double corrupt_probability = 0.3;
};

struct Utterance {
  std::string id;
  dsp::Waveform audio;
  std::vector<std::size_t> tokens;  // indices into the inventory
  std::optional<std::vector<int>> labels;
  // Sample span [begin, end) of each token's tone.
  std::vector<std::pair<std::size_t, std::size_t>> spans;
};

// Clean utterances; the reference text is what is spoken.
std::vector<Utterance> clean_split(const std::string& prefix, std::size_t n, std::uint64_t seed,
                                   const Options& opts = {});

// Each token is independently replaced, with corrupt_probability, by a
// mispronunciation: the tone of a different symbol. Labels are 0 there and
// 2 elsewhere (phoneme range).
std::vector<Utterance> labeled_split(const std::string& prefix, std::size_t n, std::uint64_t seed,
                                     const Options& opts = {});

std::string transcript(const Utterance& u);

// Split sizes for n training utterances. The labeled training split is
// larger than the clean one: the score head only sees those labels, while
// pre-training gets its supervision from the text itself.
struct SplitSizes {
  std::size_t train, heldout, labeled_train, labeled_heldout;
};
SplitSizes split_sizes(std::size_t n);

// Per-split seeds derived from the corpus seed; write_corpus and the
// acceptance run draw the same utterances.
enum class Split : std::uint64_t { Train = 1, Heldout = 2, LabeledTrain = 3, LabeledHeldout = 4 };
std::uint64_t split_seed(std::uint64_t seed, Split split);

// Schedules used on this corpus with ModelConfig::toy.
train::TrainConfig pretrain_recipe(std::uint64_t seed);
train::TrainConfig finetune_recipe(std::uint64_t seed);

// Writes wavs/, train.jsonl, heldout.jsonl, labeled_train.jsonl,
// labeled_heldout.jsonl, vocab.txt, toy.conf (model, data and pre-training
// keys) and finetune.conf under `dir`. Output is a pure function of
// (n, seed).
void write_corpus(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed,
                  const Options& opts = {});

}  // namespace mpa::io::synth
