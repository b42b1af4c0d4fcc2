#include "mpa/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <memory>
#include <numeric>

#include "mpa/error.hpp"
#include "mpa/io/keyvalue.hpp"
#include "mpa/nn/adam.hpp"
#include "mpa/nn/rng.hpp"

namespace mpa::train {

using nn::Tape;
using nn::Var;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0f)) throw InvalidInput("train.learning_rate must be positive");
  if (warmup_steps == 0) throw InvalidInput("train.warmup_steps must be positive");
  if (batch_tokens == 0) throw InvalidInput("train.batch_tokens must be positive");
  if (max_epochs == 0) throw InvalidInput("train.max_epochs must be positive");
  if (!(clip_norm > 0.0)) throw InvalidInput("train.clip_norm must be positive");
  if (!(beta1 > 0.0f && beta1 < 1.0f && beta2 > 0.0f && beta2 < 1.0f)) {
    throw InvalidInput("train.beta1 and train.beta2 must be in (0, 1)");
  }
}

float TrainConfig::learning_rate_at(std::uint64_t step) const {
  const double t = static_cast<double>(step + 1);
  const double w = static_cast<double>(warmup_steps);
  return static_cast<float>(learning_rate * std::min(t / w, std::sqrt(w / t)));
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"train.learning_rate", io::format_float(learning_rate)},
          {"train.warmup_steps", std::to_string(warmup_steps)},
          {"train.batch_tokens", std::to_string(batch_tokens)},
          {"train.max_epochs", std::to_string(max_epochs)},
          {"train.max_steps", std::to_string(max_steps)},
          {"train.seed", std::to_string(seed)},
          {"train.clip_norm", io::format_float(static_cast<float>(clip_norm))},
          {"train.beta1", io::format_float(beta1)},
          {"train.beta2", io::format_float(beta2)}};
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv, TrainConfig c) {
  for (const auto& [key, value] : kv) {
    if (key.rfind("train.", 0) != 0) continue;
    const std::string f = key.substr(6);
    if (f == "learning_rate") c.learning_rate = static_cast<float>(io::parse_double(key, value));
    else if (f == "warmup_steps") c.warmup_steps = io::parse_size(key, value);
    else if (f == "batch_tokens") c.batch_tokens = io::parse_size(key, value);
    else if (f == "max_epochs") c.max_epochs = io::parse_size(key, value);
    else if (f == "max_steps") c.max_steps = io::parse_size(key, value);
    else if (f == "seed") c.seed = io::parse_u64(key, value);
    else if (f == "clip_norm") c.clip_norm = io::parse_double(key, value);
    else if (f == "beta1") c.beta1 = static_cast<float>(io::parse_double(key, value));
    else if (f == "beta2") c.beta2 = static_cast<float>(io::parse_double(key, value));
    else throw FormatError("unknown config key '" + key + "'");
  }
  return c;
}

double label_max(text::Level level) { return level == text::Level::Phoneme ? 2.0 : 10.0; }

namespace {

std::size_t utterance_cost(const Example& e, const model::ModelConfig& config) {
  return config.subsampled_length(e.features.num_frames()) + e.tokens.size() + 2;
}

// Per-utterance loss pieces for one batch. `prepare` runs serially and
// returns how many positions the utterance contributes; `loss` builds the
// summed (not averaged) loss on a fresh tape and may run concurrently.
struct Objective {
  std::function<std::size_t(const Example&, std::size_t index, std::uint64_t step,
                                  std::size_t slot)>
      prepare;
  std::function<Var(Tape&, const model::MpaModel&, const Example&, const model::ForwardOptions&,
                    std::size_t slot)>
      loss;
};

std::string batch_ids(const std::vector<Example>& examples, const std::vector<std::size_t>& batch) {
  std::string s;
  for (std::size_t i = 0; i < batch.size() && i < 8; ++i) {
    if (i) s += ",";
    s += examples[batch[i]].id;
  }
  if (batch.size() > 8) s += ",...";
  return s;
}

TrainResult run_loop(model::MpaModel model, const std::vector<Example>& examples,
                     const TrainConfig& train, const Objective& objective, const LogSink& log,
                     Exec exec) {
  train.validate();
  if (examples.empty()) throw InvalidInput("training manifest is empty");
  const auto batches = make_batches(examples, model.config(), train.batch_tokens);
  nn::AdamState adam = nn::AdamState::for_store(
      model.params(), nn::AdamConfig{train.learning_rate, train.beta1, train.beta2, 1e-8f});

  TrainResult result{std::move(model), 0, {}};
  model::MpaModel& m = result.model;
  const auto clock_start = std::chrono::steady_clock::now();
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < train.max_epochs; ++epoch) {
    std::vector<std::size_t> order(batches.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = nn::make_engine({train.seed, epoch, 0x0BA7C4ULL});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (std::size_t b : order) {
      if (train.max_steps != 0 && step >= train.max_steps) break;
      const auto& batch = batches[b];
      std::vector<std::size_t> counts(batch.size());
      std::size_t total = 0;
      for (std::size_t s = 0; s < batch.size(); ++s) {
        counts[s] = objective.prepare(examples[batch[s]], batch[s], step, s);
        total += counts[s];
      }
      if (total == 0) continue;
      const float seed_grad = 1.0f / static_cast<float>(total);
      std::vector<double> losses(batch.size(), 0.0);

      auto run_one = [&](std::size_t s, nn::GradientSet& into) {
        if (counts[s] == 0) return;
        const Example& ex = examples[batch[s]];
        Tape tape(true);
        model::ForwardOptions opts;
        opts.train = true;
        opts.dropout_key = nn::DropoutKey{train.seed, 0, step, batch[s]};
        Var loss = objective.loss(tape, m, ex, opts, s);
        losses[s] = loss.value().item();
        tape.backward(loss, seed_grad);
        tape.accumulate_parameter_grads(into);
      };

      nn::GradientSet grads = nn::zero_gradients(m.params());
      if (exec == Exec::Serial) {
        for (std::size_t s = 0; s < batch.size(); ++s) run_one(s, grads);
      } else {
        // Each utterance gets its own buffer; merged below in batch order,
        // which reproduces the serial accumulation exactly.
        std::vector<nn::GradientSet> partial(batch.size());
        parallel_for(batch.size(), exec, [&](std::size_t s) {
          partial[s] = nn::zero_gradients(m.params());
          run_one(s, partial[s]);
        });
        for (std::size_t s = 0; s < batch.size(); ++s) {
          if (counts[s] != 0) nn::accumulate(grads, partial[s]);
        }
      }

      double loss_sum = 0.0;
      for (double l : losses) loss_sum += l;
      const double loss = loss_sum / static_cast<double>(total);
      if (!std::isfinite(loss)) {
        throw DivergedError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                            std::to_string(epoch) + "), batch [" + batch_ids(examples, batch) + "]");
      }
      const double grad_norm = nn::clip_global_norm(grads, train.clip_norm);
      if (!std::isfinite(grad_norm)) {
        throw DivergedError("non-finite gradient norm at step " + std::to_string(step) +
                            ", batch [" + batch_ids(examples, batch) + "]");
      }
      const float lr = train.learning_rate_at(step);
      nn::adam_step(m.params(), grads, adam, lr);

      LogRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.loss = loss;
      rec.lr = lr;
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              clock_start)
                        .count();
      result.curve.push_back(rec);
      if (log) log(rec);
      ++step;
    }
    if (train.max_steps != 0 && step >= train.max_steps) break;
  }
  result.steps = step;
  return result;
}

}  // namespace

std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& examples,
                                                   const model::ModelConfig& config,
                                                   std::size_t batch_tokens) {
  std::vector<std::size_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<std::size_t> cost(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) cost[i] = utterance_cost(examples[i], config);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return cost[a] < cost[b]; });
  std::vector<std::vector<std::size_t>> batches;
  std::size_t used = 0;
  for (std::size_t i : idx) {
    if (batches.empty() || used + cost[i] > batch_tokens) {
      batches.emplace_back();
      used = 0;
    }
    batches.back().push_back(i);
    used += cost[i];
  }
  return batches;
}

TrainResult pretrain_from(model::MpaModel model, const std::vector<Example>& examples,
                          const TrainConfig& train, const LogSink& log, Exec exec) {
  for (const auto& e : examples) {
    if (e.tokens.empty()) throw InvalidInput("utterance '" + e.id + "' has an empty transcript");
    if (e.features.empty()) throw InvalidInput("utterance '" + e.id + "' has no audio frames");
  }
  // Masks for the current batch, by slot. prepare() runs before any loss().
  auto masks = std::make_shared<std::vector<MaskPattern>>();
  Objective obj;
  obj.prepare = [&train, masks](const Example& e, std::size_t index, std::uint64_t step,
                                std::size_t slot) {
    if (masks->size() <= slot) masks->resize(slot + 1);
    auto rng = nn::make_engine({train.seed, step, index, 0x4D41534BULL});
    (*masks)[slot] = sample_mask(e.tokens.size(), rng);
    return (*masks)[slot].size();
  };
  obj.loss = [masks](Tape& tape, const model::MpaModel& m, const Example& e,
                     const model::ForwardOptions& opts, std::size_t slot) {
    Var enc = m.encode_audio(tape, e.features, opts);
    return model::masked_nll(tape, m, enc, e.tokens, (*masks)[slot], opts, nn::Reduction::Sum);
  };
  return run_loop(std::move(model), examples, train, obj, log, exec);
}

TrainResult pretrain(const std::vector<Example>& examples, const model::ModelConfig& config,
                     const TrainConfig& train, const LogSink& log, Exec exec) {
  if (examples.empty()) throw InvalidInput("training manifest is empty");
  train.validate();
  return pretrain_from(model::MpaModel(config, train.seed), examples, train, log, exec);
}

TrainResult finetune(model::MpaModel model, const std::vector<Example>& examples, text::Level level,
                     const TrainConfig& train, const LogSink& log, const WarningSink& warn,
                     Exec exec) {
  const double top = label_max(level);
  std::vector<Example> usable;
  for (const auto& e : examples) {
    if (!e.labels) {
      if (warn) warn("utterance '" + e.id + "' has no labels; skipped");
      continue;
    }
    if (e.labels->size() != e.tokens.size()) {
      throw InvalidInput("utterance '" + e.id + "' has " + std::to_string(e.labels->size()) +
                         " labels for " + std::to_string(e.tokens.size()) + " tokens");
    }
    for (int l : *e.labels) {
      if (l < 0 || l > top) {
        throw InvalidInput("utterance '" + e.id + "' has label " + std::to_string(l) +
                           " outside [0, " + std::to_string(static_cast<int>(top)) + "]");
      }
    }
    if (e.tokens.empty()) continue;
    usable.push_back(e);
  }
  if (usable.empty()) throw InvalidInput("no labeled utterances to fine-tune on");
  if (!model.has_score_head()) model.add_score_head();

  Objective obj;
  obj.prepare = [](const Example& e, std::size_t, std::uint64_t, std::size_t) {
    return e.tokens.size();
  };
  obj.loss = [top](Tape& tape, const model::MpaModel& m, const Example& e,
                   const model::ForwardOptions& opts, std::size_t) {
    Var enc = m.encode_audio(tape, e.features, opts);
    const auto input = model::decoder_input(e.tokens);
    auto out = m.decode(tape, input, enc, opts);
    Var scores = m.score_head(tape, out.hidden);
    std::vector<float> targets(input.size(), 0.0f);
    std::vector<bool> selected(input.size(), false);
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      targets[i + 1] = static_cast<float>((*e.labels)[i] / top);
      selected[i + 1] = true;
    }
    return nn::masked_mse(scores, targets, selected, nn::Reduction::Sum);
  };
  return run_loop(std::move(model), usable, train, obj, log, exec);
}

}  // namespace mpa::train
