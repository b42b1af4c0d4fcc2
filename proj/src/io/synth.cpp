#include "mpa/io/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "mpa/dsp/wav.hpp"
#include "mpa/error.hpp"
#include "mpa/io/atomic_file.hpp"
#include "mpa/io/keyvalue.hpp"
#include "mpa/io/manifest.hpp"
#include "mpa/model/config.hpp"
#include "mpa/nn/rng.hpp"
#include "mpa/text/vocab.hpp"
#include "mpa/train/trainer.hpp"

namespace mpa::io::synth {

const ToneInventory& default_inventory() {
  static const ToneInventory inv = [] {
    ToneInventory v;
    v.symbols = {"AA", "EH", "IY", "OW", "UW", "B", "D", "G", "K", "S"};
    for (std::size_t i = 0; i < v.symbols.size(); ++i) {
      v.frequencies_hz.push_back(300.0 * std::pow(1.28, static_cast<double>(i)));
    }
    return v;
  }();
  return inv;
}

namespace {

std::size_t ms_to_samples(double ms, int rate) {
  return static_cast<std::size_t>(std::lround(ms * rate / 1000.0));
}

// Tone sequence with raised-cosine 5 ms fades and low white noise.
Utterance render(std::string id, std::vector<std::size_t> tokens,
                 const std::vector<double>& freqs, const Options& opts, std::mt19937_64& rng) {
  const int rate = opts.sample_rate_hz;
  const std::size_t tone = ms_to_samples(opts.tone_ms, rate);
  const std::size_t gap = ms_to_samples(opts.gap_ms, rate);
  const std::size_t edge = ms_to_samples(opts.edge_ms, rate);
  const std::size_t fade = ms_to_samples(5.0, rate);
  const std::size_t total = 2 * edge + tokens.size() * tone + (tokens.size() - 1) * gap;

  Utterance u;
  u.id = std::move(id);
  u.audio.sample_rate_hz = rate;
  u.audio.samples.assign(total, 0.0f);
  std::normal_distribution<double> noise(0.0, opts.noise_rms);
  std::uniform_real_distribution<double> amp(0.3, 0.6);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::size_t pos = edge;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const double a = amp(rng);
    const double ph = phase(rng);
    const double w = 2.0 * std::numbers::pi * freqs[t] / rate;
    for (std::size_t n = 0; n < tone; ++n) {
      double env = 1.0;
      if (n < fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * n / fade);
      if (tone - 1 - n < fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (tone - 1 - n) / fade);
      u.audio.samples[pos + n] = static_cast<float>(a * env * std::sin(w * n + ph));
    }
    u.spans.emplace_back(pos, pos + tone);
    pos += tone + gap;
  }
  for (float& s : u.audio.samples) s += static_cast<float>(noise(rng));
  u.tokens = std::move(tokens);
  return u;
}

std::vector<std::size_t> random_tokens(const Options& opts, std::size_t vocab,
                                       std::mt19937_64& rng) {
  if (opts.min_tokens == 0 || opts.max_tokens < opts.min_tokens) {
    throw InvalidInput("synthetic corpus needs 1 <= min_tokens <= max_tokens");
  }
  std::uniform_int_distribution<std::size_t> len(opts.min_tokens, opts.max_tokens);
  if (opts.grammar_strength < 0.0 || opts.grammar_strength > 1.0) {
    throw InvalidInput("grammar_strength must be in [0, 1]");
  }
  std::uniform_int_distribution<std::size_t> sym(0, vocab - 1);
  std::bernoulli_distribution follow(opts.grammar_strength);
  std::bernoulli_distribution near(0.5);
  std::vector<std::size_t> out(len(rng));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i > 0 && follow(rng)) {
      out[i] = (out[i - 1] + (near(rng) ? 1 : 3)) % vocab;
    } else {
      out[i] = sym(rng);
    }
  }
  return out;
}

std::string utterance_id(const std::string& prefix, std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%04zu", i);
  return prefix + buf;
}

}  // namespace

std::vector<Utterance> clean_split(const std::string& prefix, std::size_t n, std::uint64_t seed,
                                   const Options& opts) {
  const auto& inv = default_inventory();
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = nn::make_engine({seed, i, 0xC1EAULL});
    auto tokens = random_tokens(opts, inv.symbols.size(), rng);
    std::vector<double> freqs;
    for (auto t : tokens) freqs.push_back(inv.frequencies_hz[t]);
    out.push_back(render(utterance_id(prefix, i), std::move(tokens), freqs, opts, rng));
  }
  return out;
}

std::vector<Utterance> labeled_split(const std::string& prefix, std::size_t n, std::uint64_t seed,
                                     const Options& opts) {
  const auto& inv = default_inventory();
  const std::size_t vocab = inv.symbols.size();
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = nn::make_engine({seed, i, 0x1ABE1ULL});
    auto tokens = random_tokens(opts, vocab, rng);
    std::bernoulli_distribution corrupt(opts.corrupt_probability);
    std::uniform_int_distribution<std::size_t> other(1, vocab - 1);
    std::vector<double> freqs;
    std::vector<int> labels;
    for (auto t : tokens) {
      if (corrupt(rng)) {
        freqs.push_back(inv.frequencies_hz[(t + other(rng)) % vocab]);
        labels.push_back(0);
      } else {
        freqs.push_back(inv.frequencies_hz[t]);
        labels.push_back(2);
      }
    }
    Utterance u = render(utterance_id(prefix, i), std::move(tokens), freqs, opts, rng);
    u.labels = std::move(labels);
    out.push_back(std::move(u));
  }
  return out;
}

std::string transcript(const Utterance& u) {
  const auto& inv = default_inventory();
  std::string s;
  for (std::size_t i = 0; i < u.tokens.size(); ++i) {
    if (i) s += ' ';
    s += inv.symbols[u.tokens[i]];
  }
  return s;
}

SplitSizes split_sizes(std::size_t n) {
  const std::size_t held = std::max<std::size_t>(10, n * 5 / 2);
  return {n, held, 15 * n, held};
}

std::uint64_t split_seed(std::uint64_t seed, Split split) {
  return nn::mix_key({seed, static_cast<std::uint64_t>(split)});
}

train::TrainConfig pretrain_recipe(std::uint64_t seed) {
  train::TrainConfig t;
  t.seed = seed;
  t.learning_rate = 2e-3f;
  t.warmup_steps = 100;
  t.max_steps = 1000;
  t.max_epochs = 100000;
  return t;
}

train::TrainConfig finetune_recipe(std::uint64_t seed) {
  train::TrainConfig t;
  t.seed = seed;
  t.learning_rate = 1e-3f;
  t.warmup_steps = 20;
  t.max_steps = 500;
  t.max_epochs = 100000;
  // ~20 utterances per step; a full-batch head overfits the labeled set.
  t.batch_tokens = 500;
  return t;
}

void write_corpus(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed,
                  const Options& opts) {
  if (n == 0) throw InvalidInput("synthetic corpus size must be positive");
  std::error_code ec;
  std::filesystem::create_directories(dir / "wavs", ec);
  if (ec) throw IoError("cannot create '" + (dir / "wavs").string() + "': " + ec.message());

  const auto sizes = split_sizes(n);
  struct Part {
    const char* file;
    std::vector<Utterance> utts;
  };
  Part parts[] = {
      {"train.jsonl", clean_split("train", sizes.train, split_seed(seed, Split::Train), opts)},
      {"heldout.jsonl", clean_split("heldout", sizes.heldout, split_seed(seed, Split::Heldout), opts)},
      {"labeled_train.jsonl",
       labeled_split("ltrain", sizes.labeled_train, split_seed(seed, Split::LabeledTrain), opts)},
      {"labeled_heldout.jsonl",
       labeled_split("lheld", sizes.labeled_heldout, split_seed(seed, Split::LabeledHeldout), opts)},
  };
  for (auto& part : parts) {
    std::vector<ManifestEntry> entries;
    for (const auto& u : part.utts) {
      const auto rel = std::filesystem::path("wavs") / (u.id + ".wav");
      dsp::write_wav(dir / rel, u.audio);
      ManifestEntry e;
      e.id = u.id;
      e.audio = dir / rel;
      e.text = transcript(u);
      e.level = text::Level::Phoneme;
      e.labels = u.labels;
      entries.push_back(std::move(e));
    }
    save_manifest(dir / part.file, entries);
  }

  std::vector<std::string> tokens = text::Vocabulary::reserved_tokens();
  for (const auto& s : default_inventory().symbols) tokens.push_back(s);
  const auto vocab = text::Vocabulary::from_tokens(tokens, text::Level::Phoneme);
  vocab.save(dir / "vocab.txt");

  KeyValues conf = model::ModelConfig::toy(vocab.size()).to_map();
  for (auto& [k, v] : pretrain_recipe(seed).to_map()) conf[k] = v;
  conf["data.level"] = "phoneme";
  conf["data.vocab"] = "vocab.txt";
  write_file_atomic(dir / "toy.conf", format_key_values(conf));
  write_file_atomic(dir / "finetune.conf", format_key_values(finetune_recipe(seed).to_map()));
}

}  // namespace mpa::io::synth
