// mpa: command-line front end for pre-training, fine-tuning, scoring,
// decoding and evaluating mask-predict pronunciation assessment models.
//
// Exit codes: 0 ok, 1 unexpected, 2 bad arguments, 3 I/O, 4 format or
// version, 5 diverged training.

#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mpa/dsp/audio.hpp"
#include "mpa/dsp/wav.hpp"
#include "mpa/error.hpp"
#include "mpa/io/atomic_file.hpp"
#include "mpa/io/checkpoint.hpp"
#include "mpa/io/dataset.hpp"
#include "mpa/io/keyvalue.hpp"
#include "mpa/io/manifest.hpp"
#include "mpa/io/report.hpp"
#include "mpa/io/synth.hpp"
#include "mpa/metrics/metrics.hpp"
#include "mpa/nn/kernels.hpp"
#include "mpa/score/scorer.hpp"
#include "mpa/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace mpa;

namespace {

enum Exit : int { kOk = 0, kUnexpected = 1, kBadArgs = 2, kIo = 3, kFormat = 4, kDiverged = 5 };

Exec g_exec = Exec::Parallel;

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

// Lines of output written atomically once the command has succeeded, or
// streamed to stdout when no path was given.
class Output {
 public:
  explicit Output(std::string path) : path_(std::move(path)) {}
  void line(const std::string& s) {
    if (path_.empty() || path_ == "-") {
      std::cout << s << '\n';
    } else {
      buffer_ += s;
      buffer_ += '\n';
    }
  }
  void commit() {
    if (!path_.empty() && path_ != "-") io::write_file_atomic(path_, buffer_);
  }

 private:
  std::string path_;
  std::string buffer_;
};

std::optional<text::Lexicon> load_lexicon(const std::string& path, const text::Vocabulary& vocab) {
  if (path.empty()) return std::nullopt;
  return text::Lexicon::load(path, vocab);
}

// ---- pretrain -------------------------------------------------------------

struct DataConfig {
  std::optional<text::Level> level;
  std::optional<fs::path> vocab;
  std::size_t vocab_size = 1000;
  std::optional<fs::path> lexicon;
};

DataConfig data_config(const io::KeyValues& kv, const fs::path& base) {
  DataConfig d;
  for (const auto& [k, v] : kv) {
    if (k.rfind("data.", 0) != 0) continue;
    if (k == "data.level") {
      try {
        d.level = text::parse_level(v);
      } catch (const InvalidInput& e) {
        throw FormatError(std::string("data.level: ") + e.what());
      }
    } else if (k == "data.vocab") {
      d.vocab = base / v;
    } else if (k == "data.vocab_size") {
      d.vocab_size = io::parse_size(k, v);
    } else if (k == "data.lexicon") {
      d.lexicon = base / v;
    } else {
      throw FormatError("unknown config key '" + k + "'");
    }
  }
  return d;
}

void check_prefixes(const io::KeyValues& kv, std::initializer_list<std::string_view> allowed) {
  for (const auto& [k, v] : kv) {
    bool ok = false;
    for (auto p : allowed) ok = ok || k.rfind(p, 0) == 0;
    if (!ok) throw FormatError("unknown config key '" + k + "'");
  }
}

train::LogSink log_to(std::ostream& out) {
  return [&out](const train::LogRecord& r) { out << io::format_log_record(r) << std::endl; };
}

int cmd_pretrain(const std::string& config_path, const std::string& manifest_path,
                 const std::string& out_path) {
  io::KeyValues kv;
  fs::path base = ".";
  if (!config_path.empty()) {
    kv = io::load_key_values(config_path);
    base = fs::path(config_path).parent_path();
  }
  check_prefixes(kv, {"model.", "train.", "data."});
  const DataConfig data = data_config(kv, base);
  const auto entries = io::load_manifest(manifest_path);
  if (entries.empty()) throw InvalidInput("manifest '" + manifest_path + "' has no entries");

  const text::Level level = data.level.value_or(entries.front().level);
  std::optional<text::Vocabulary> vocab;
  if (data.vocab) {
    vocab = text::Vocabulary::load(*data.vocab, level);
  } else {
    std::vector<std::string> texts;
    for (const auto& e : entries) {
      if (e.level != level) {
        throw InvalidInput("entry '" + e.id + "' does not match data.level; give data.vocab "
                           "and data.lexicon to phonemize");
      }
      texts.push_back(e.text);
    }
    vocab = text::Vocabulary::build(texts, level, data.vocab_size);
  }
  const auto lexicon = load_lexicon(data.lexicon ? data.lexicon->string() : "", *vocab);

  model::ModelConfig cfg = model::ModelConfig::desk_default(vocab->size());
  cfg = model::ModelConfig::from_map(kv, cfg);
  if (kv.count("model.vocab_size") && cfg.vocab_size != vocab->size()) {
    throw InvalidInput("model.vocab_size = " + std::to_string(cfg.vocab_size) +
                       " but the vocabulary has " + std::to_string(vocab->size()) + " tokens");
  }
  cfg.vocab_size = vocab->size();
  cfg.validate();
  const train::TrainConfig tc = train::TrainConfig::from_map(kv, train::TrainConfig{});

  const auto examples = io::load_examples(entries, *vocab, lexicon ? &*lexicon : nullptr, g_exec);
  auto result = train::pretrain(examples, cfg, tc, log_to(std::cout), g_exec);
  io::save_checkpoint(out_path, io::Checkpoint{std::move(result.model), *vocab, tc.to_map(),
                                               tc.seed, result.steps});
  return kOk;
}

// ---- finetune ---------------------------------------------------------------

int cmd_finetune(const std::string& ckpt_path, const std::string& manifest_path,
                 const std::string& out_path, const std::string& config_path,
                 const std::string& lexicon_path) {
  auto ckpt = io::load_checkpoint(ckpt_path);
  io::KeyValues kv;
  if (!config_path.empty()) kv = io::load_key_values(config_path);
  // A shared config file may carry model/data keys; only train.* applies.
  check_prefixes(kv, {"model.", "train.", "data."});
  train::TrainConfig tc;
  tc.seed = ckpt.seed;
  tc = train::TrainConfig::from_map(kv, tc);

  const auto lexicon = load_lexicon(lexicon_path, ckpt.vocab);
  const auto entries = io::load_manifest(manifest_path);
  const auto examples = io::load_examples(entries, ckpt.vocab, lexicon ? &*lexicon : nullptr, g_exec);
  auto result = train::finetune(std::move(ckpt.model), examples, ckpt.vocab.level(), tc,
                                log_to(std::cout), warn, g_exec);
  io::save_checkpoint(out_path, io::Checkpoint{std::move(result.model), std::move(ckpt.vocab),
                                               tc.to_map(), tc.seed, result.steps});
  return kOk;
}

// ---- score ------------------------------------------------------------------

int cmd_score(const std::string& ckpt_path, const std::string& manifest_path, const std::string& mode,
              const std::string& out_path, std::optional<double> scale_max,
              const std::string& lexicon_path) {
  const auto ckpt = io::load_checkpoint(ckpt_path);
  const double top = scale_max.value_or(train::label_max(ckpt.vocab.level()));
  if (!(top > 0.0)) throw InvalidInput("--scale-max must be positive");
  if (mode == "sup" && !ckpt.model.has_score_head()) {
    throw InvalidState("checkpoint '" + ckpt_path + "' has no score head; run finetune first");
  }
  const auto lexicon = load_lexicon(lexicon_path, ckpt.vocab);
  const auto entries = io::load_manifest(manifest_path);
  const auto examples = io::load_examples(entries, ckpt.vocab, lexicon ? &*lexicon : nullptr, g_exec);

  Output out(out_path);
  for (const auto& e : examples) {
    const auto report = mode == "sup"
                            ? score::predict_supervised_scores(ckpt.model, e.features, e.tokens, top, e.id)
                            : score::score_utterance(ckpt.model, e.features, e.tokens, top, e.id, g_exec);
    out.line(io::format_score_report(report, &ckpt.vocab));
  }
  out.commit();
  return kOk;
}

// ---- decode -----------------------------------------------------------------

int cmd_decode(const std::string& ckpt_path, const std::string& manifest_path, std::size_t steps,
               const std::string& out_path, const std::string& lexicon_path) {
  const auto ckpt = io::load_checkpoint(ckpt_path);
  const auto lexicon = load_lexicon(lexicon_path, ckpt.vocab);
  const auto entries = io::load_manifest(manifest_path);
  const auto examples = io::load_examples(entries, ckpt.vocab, lexicon ? &*lexicon : nullptr, g_exec);

  Output out(out_path);
  std::size_t hits = 0, total = 0, edits = 0;
  for (const auto& e : examples) {
    const std::size_t n = e.tokens.size();
    const auto result = score::mask_predict_decode(
        ckpt.model, e.features, n, steps, [&](const std::string& m) { warn(e.id + ": " + m); });
    io::DecodeRecord rec;
    rec.id = e.id;
    rec.hypothesis = text::decode(result.tokens, ckpt.vocab);
    rec.reference = text::decode(e.tokens, ckpt.vocab);
    rec.steps = result.steps;
    rec.committed = result.committed;
    rec.token_accuracy = metrics::token_accuracy(result.tokens.ids, e.tokens.ids);
    const std::size_t d = metrics::edit_distance(result.tokens.ids, e.tokens.ids);
    rec.wer = static_cast<double>(d) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) hits += result.tokens.ids[i] == e.tokens.ids[i];
    total += n;
    edits += d;
    out.line(io::format_decode_record(rec));
  }
  out.commit();
  // Corpus-level summary on stdout: errors pooled over all references.
  const double acc = total ? static_cast<double>(hits) / total : 0.0;
  const double wer = total ? static_cast<double>(edits) / total : 0.0;
  std::cout << io::format_metric({"token_accuracy", acc, total, std::nullopt, std::nullopt}) << '\n';
  std::cout << io::format_metric({"wer", wer, total, std::nullopt, std::nullopt}) << '\n';
  return kOk;
}

// ---- eval -------------------------------------------------------------------

// Per-utterance values from either a score report file or a labeled
// manifest.
struct Track {
  std::vector<double> values;
  std::vector<int> tokens;
  std::optional<std::vector<int>> predicted;
  text::Level level = text::Level::Word;
};

std::map<std::string, Track> read_tracks(const std::string& path) {
  const std::string text = io::read_file(path);
  // Score reports carry a "tokens" array; manifests carry "labels".
  const bool is_report = text.find("\"tokens\"") != std::string::npos;
  std::map<std::string, Track> out;
  if (is_report) {
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string::npos) nl = text.size();
      const std::string_view line(text.data() + pos, nl - pos);
      pos = nl + 1;
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      const auto r = io::parse_score_report(line, path + ":" + std::to_string(line_no));
      Track t;
      t.level = r.level;
      std::vector<int> pred;
      bool have_pred = true;
      for (const auto& s : r.tokens) {
        t.values.push_back(s.scaled_score);
        t.tokens.push_back(s.token);
        if (s.predicted) pred.push_back(*s.predicted);
        else have_pred = false;
      }
      if (have_pred) t.predicted = std::move(pred);
      if (!out.emplace(r.utterance_id, std::move(t)).second) {
        throw FormatError(path + ": duplicate utterance id '" + r.utterance_id + "'");
      }
    }
  } else {
    for (const auto& e : io::parse_manifest(text, fs::path(path).parent_path(), path)) {
      if (!e.labels) throw FormatError(path + ": entry '" + e.id + "' has no labels");
      Track t;
      t.level = e.level;
      for (int l : *e.labels) t.values.push_back(l);
      out.emplace(e.id, std::move(t));
    }
  }
  return out;
}

int cmd_eval(const std::string& pred_path, const std::string& label_path, bool buckets,
             const std::string& out_path) {
  const auto pred = read_tracks(pred_path);
  const auto gold = read_tracks(label_path);

  std::vector<double> x, y;
  std::vector<int> hyp, ref;
  bool have_acc = true;
  std::optional<text::Level> level;
  for (const auto& [id, g] : gold) {
    const auto it = pred.find(id);
    if (it == pred.end()) throw InvalidInput("no prediction for utterance '" + id + "'");
    const auto& p = it->second;
    if (p.values.size() != g.values.size()) {
      throw InvalidInput("utterance '" + id + "': " + std::to_string(p.values.size()) +
                         " predictions for " + std::to_string(g.values.size()) + " labels");
    }
    level = g.level;
    x.insert(x.end(), p.values.begin(), p.values.end());
    y.insert(y.end(), g.values.begin(), g.values.end());
    if (p.predicted) {
      hyp.insert(hyp.end(), p.predicted->begin(), p.predicted->end());
      ref.insert(ref.end(), p.tokens.begin(), p.tokens.end());
    } else {
      have_acc = false;
    }
  }
  for (const auto& [id, p] : pred) {
    if (!gold.count(id)) warn("prediction for '" + id + "' has no label; ignored");
  }
  if (x.empty()) throw InvalidInput("nothing to evaluate");

  Output out(out_path);
  out.line(io::format_metric({"mse", metrics::mse(x, y), x.size(), std::nullopt, std::nullopt}));
  try {
    out.line(io::format_metric({"pcc", metrics::pcc(x, y), x.size(), std::nullopt, std::nullopt}));
  } catch (const UndefinedCorrelation& e) {
    warn(std::string("pcc: ") + e.what());
    out.line(io::format_metric({"pcc", std::nullopt, x.size(), std::nullopt, e.what()}));
  }
  if (have_acc && !hyp.empty()) {
    const double acc = metrics::token_accuracy(hyp, ref);
    out.line(io::format_metric({"token_accuracy", acc, hyp.size(), std::nullopt, std::nullopt}));
    if (buckets) {
      const auto edges = metrics::buckets_for(*level);
      out.line(io::format_metric({"accuracy_by_rating", acc, hyp.size(),
                                  metrics::accuracy_by_rating(hyp, ref, y, edges), std::nullopt}));
    }
  } else if (buckets) {
    warn("predictions carry no argmax tokens; accuracy_by_rating needs an unsupervised score file");
  }
  out.commit();
  return kOk;
}

// ---- attn -------------------------------------------------------------------

int cmd_attn(const std::string& ckpt_path, const std::string& manifest_path, const std::string& id,
             const std::string& prefix, const std::string& lexicon_path) {
  const auto ckpt = io::load_checkpoint(ckpt_path);
  const auto lexicon = load_lexicon(lexicon_path, ckpt.vocab);
  const auto entries = io::load_manifest(manifest_path);
  std::vector<io::ManifestEntry> chosen;
  for (const auto& e : entries) {
    if (e.id == id) chosen.push_back(e);
  }
  if (chosen.empty()) throw InvalidInput("no entry '" + id + "' in '" + manifest_path + "'");
  const auto examples = io::load_examples(chosen, ckpt.vocab, lexicon ? &*lexicon : nullptr, g_exec);
  const auto& e = examples.front();
  const auto map = score::export_attention(ckpt.model, e.features, e.tokens, g_exec);
  std::vector<std::string> labels;
  for (int t : e.tokens.ids) labels.push_back(ckpt.vocab.token(t));
  io::write_file_atomic(prefix + ".csv", io::attention_csv(map.weights, labels));
  io::write_file_atomic(prefix + ".pgm", io::attention_pgm(map.weights));
  return kOk;
}

// ---- features ---------------------------------------------------------------

int cmd_features(const std::string& wav_path, const std::string& out_path) {
  dsp::Waveform w = dsp::read_wav(wav_path);
  if (w.sample_rate_hz != dsp::kFeatureRateHz) w = dsp::resample(w, dsp::kFeatureRateHz);
  const auto mel = dsp::log_mel_spectrogram(w, g_exec);
  Output out(out_path);
  std::string header = "frame";
  for (std::size_t m = 0; m < dsp::kNumMel; ++m) header += ",mel_" + std::to_string(m);
  out.line(header);
  for (std::size_t t = 0; t < mel.num_frames(); ++t) {
    std::string row = std::to_string(t);
    for (float v : mel.frame(t)) row += "," + io::format_float(v);
    out.line(row);
  }
  out.commit();
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Mask-predict pronunciation assessment"};
  app.require_subcommand(1);
  int threads = 0;
  bool serial = false;
  app.add_option("--threads", threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--serial", serial, "Use the serial reference kernels");

  std::string config, manifest, out, checkpoint, mode = "unsup", lexicon, pred, labels, id, wav;
  std::size_t steps = 1, n = 20;
  std::uint64_t seed = 7;
  std::optional<double> scale_max;
  bool buckets = false;

  auto* pre = app.add_subcommand("pretrain", "Masked pre-training from a manifest");
  pre->add_option("--config", config, "key = value config file (optional)");
  pre->add_option("--manifest", manifest, "JSONL manifest")->required();
  pre->add_option("--out", out, "Output checkpoint")->required();

  auto* fine = app.add_subcommand("finetune", "Fit the score head on labeled data");
  fine->add_option("--checkpoint", checkpoint, "Pre-trained checkpoint")->required();
  fine->add_option("--manifest", manifest, "Labeled JSONL manifest")->required();
  fine->add_option("--out", out, "Output checkpoint")->required();
  fine->add_option("--config", config, "train.* overrides");
  fine->add_option("--lexicon", lexicon, "word<TAB>phonemes lexicon");

  auto* sc = app.add_subcommand("score", "Per-token scores as JSONL");
  sc->add_option("--checkpoint", checkpoint)->required();
  sc->add_option("--manifest", manifest)->required();
  sc->add_option("--mode", mode, "unsup or sup")->check(CLI::IsMember({"unsup", "sup"}));
  sc->add_option("--out", out, "Output JSONL (default stdout)");
  sc->add_option("--scale-max", scale_max, "Top of the score range (default 2 phoneme, 10 word)");
  sc->add_option("--lexicon", lexicon);

  auto* dec = app.add_subcommand("decode", "Mask-predict decoding with a WER report");
  dec->add_option("--checkpoint", checkpoint)->required();
  dec->add_option("--manifest", manifest)->required();
  dec->add_option("--steps", steps, "Decoding iterations")->required()->check(CLI::PositiveNumber);
  dec->add_option("--out", out, "Per-utterance JSONL (default stdout)");
  dec->add_option("--lexicon", lexicon);

  auto* ev = app.add_subcommand("eval", "MSE, PCC, accuracy and rating buckets");
  ev->add_option("--pred", pred, "Score JSONL or labeled manifest")->required();
  ev->add_option("--labels", labels, "Labeled manifest or score JSONL")->required();
  ev->add_flag("--buckets", buckets, "Add accuracy by rating bucket");
  ev->add_option("--out", out, "Metrics JSONL (default stdout)");

  auto* at = app.add_subcommand("attn", "Export last-layer cross-attention");
  at->add_option("--checkpoint", checkpoint)->required();
  at->add_option("--manifest", manifest)->required();
  at->add_option("--id", id, "Manifest entry id")->required();
  at->add_option("--out", out, "Output prefix; writes <prefix>.csv and <prefix>.pgm")->required();
  at->add_option("--lexicon", lexicon);

  auto* sy = app.add_subcommand("synth", "Write a synthetic tone corpus");
  sy->add_option("--n", n, "Training utterances")->check(CLI::PositiveNumber);
  sy->add_option("--seed", seed);
  sy->add_option("--out", out, "Output directory")->required();

  auto* fe = app.add_subcommand("features", "Dump log-mel features as CSV");
  fe->add_option("--wav", wav)->required();
  fe->add_option("--out", out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kBadArgs;
  }

  if (threads > 0) omp_set_num_threads(threads);
  if (serial) {
    g_exec = Exec::Serial;
    nn::kernels::set_default_exec(Exec::Serial);
  }

  if (*pre) return cmd_pretrain(config, manifest, out);
  if (*fine) return cmd_finetune(checkpoint, manifest, out, config, lexicon);
  if (*sc) return cmd_score(checkpoint, manifest, mode, out, scale_max, lexicon);
  if (*dec) return cmd_decode(checkpoint, manifest, steps, out, lexicon);
  if (*ev) return cmd_eval(pred, labels, buckets, out);
  if (*at) return cmd_attn(checkpoint, manifest, id, out, lexicon);
  if (*sy) {
    io::synth::write_corpus(out, n, seed);
    return kOk;
  }
  if (*fe) return cmd_features(wav, out);
  return kBadArgs;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const DivergedError& e) {
    std::cerr << "error: training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFormat;
  } catch (const MissingPronunciation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFormat;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadArgs;
  } catch (const InvalidState& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadArgs;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnexpected;
  }
}
