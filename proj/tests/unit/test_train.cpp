#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "../support/fixtures.hpp"
#include "mpa/error.hpp"
#include "mpa/io/checkpoint.hpp"
#include "mpa/nn/rng.hpp"
#include "mpa/train/mask.hpp"
#include "mpa/train/trainer.hpp"

using namespace mpa;
using namespace mpa::train;
using mpa::testing::tiny_config;
using mpa::testing::to_examples;

namespace {

std::vector<Example> clean(std::size_t n, std::uint64_t seed) {
  return to_examples(io::synth::clean_split("u", n, seed));
}

TrainConfig quick(std::size_t steps, std::uint64_t seed = 3) {
  TrainConfig t;
  t.max_steps = steps;
  t.max_epochs = 100000;
  t.seed = seed;
  t.warmup_steps = 10;
  return t;
}

}  // namespace

TEST_CASE("sample_mask: k uniform on 1..n, positions valid") {
  std::mt19937_64 rng(11);
  std::map<std::size_t, int> k2;
  for (int i = 0; i < 10000; ++i) ++k2[sample_mask(2, rng).size()];
  CHECK(std::abs(k2[1] / 10000.0 - 0.5) < 0.03);

  std::vector<int> k8(9, 0), pos(8, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto m = sample_mask(8, rng);
    CHECK_NOTHROW(m.validate(8));
    ++k8[m.size()];
    for (auto p : m.positions) ++pos[p];
  }
  CHECK(k8[0] == 0);
  for (std::size_t k = 1; k <= 8; ++k) CHECK(std::abs(k8[k] / 10000.0 - 0.125) < 0.01);
  // Each position is masked with probability E[k]/n = 4.5/8.
  for (int c : pos) CHECK(std::abs(c / 10000.0 - 0.5625) < 0.02);

  CHECK(sample_mask(1, rng).positions == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(sample_mask(0, rng), InvalidInput);
}

TEST_CASE("mask pattern validation") {
  CHECK_THROWS_AS(MaskPattern{}.validate(3), InvalidInput);
  CHECK_THROWS_AS((MaskPattern{{0, 1, 2, 3}}).validate(3), InvalidInput);
  CHECK_THROWS_AS((MaskPattern{{3}}).validate(3), InvalidInput);
  CHECK_THROWS_AS((MaskPattern{{1, 1}}).validate(3), InvalidInput);
  CHECK_THROWS_AS((MaskPattern{{2, 1}}).validate(3), InvalidInput);
  CHECK_NOTHROW((MaskPattern{{0, 2}}).validate(3));
  CHECK((MaskPattern{{0, 2}}).contains(2));
  CHECK_FALSE((MaskPattern{{0, 2}}).contains(1));
}

TEST_CASE("learning-rate schedule") {
  TrainConfig t;
  t.learning_rate = 1e-3f;
  t.warmup_steps = 10;
  CHECK(t.learning_rate_at(0) == doctest::Approx(1e-4));
  CHECK(t.learning_rate_at(9) == doctest::Approx(1e-3));
  CHECK(t.learning_rate_at(39) == doctest::Approx(5e-4));
  for (std::uint64_t s = 1; s < 10; ++s) CHECK(t.learning_rate_at(s) > t.learning_rate_at(s - 1));
  for (std::uint64_t s = 10; s < 100; ++s) CHECK(t.learning_rate_at(s) < t.learning_rate_at(s - 1));
}

TEST_CASE("train config validation and key/value round trip") {
  TrainConfig t;
  t.learning_rate = 0.0f;
  CHECK_THROWS_AS(t.validate(), InvalidInput);
  t = TrainConfig{};
  t.warmup_steps = 0;
  CHECK_THROWS_AS(t.validate(), InvalidInput);
  t = TrainConfig{};
  t.beta2 = 1.0f;
  CHECK_THROWS_AS(t.validate(), InvalidInput);

  TrainConfig c;
  c.learning_rate = 3.5e-4f;
  c.batch_tokens = 777;
  c.seed = 99;
  const auto back = TrainConfig::from_map(c.to_map(), TrainConfig{});
  CHECK(back.to_map() == c.to_map());
  CHECK_THROWS_AS(TrainConfig::from_map({{"train.speed", "1"}}, TrainConfig{}), FormatError);
  CHECK_THROWS_AS(TrainConfig::from_map({{"train.seed", "x"}}, TrainConfig{}), FormatError);
}

TEST_CASE("batching respects the budget and covers every utterance once") {
  const auto ex = clean(12, 5);
  const auto cfg = tiny_config(15);
  for (std::size_t budget : {1u, 60u, 200u, 100000u}) {
    const auto batches = make_batches(ex, cfg, budget);
    std::vector<int> seen(ex.size(), 0);
    for (const auto& b : batches) {
      REQUIRE_FALSE(b.empty());
      std::size_t cost = 0;
      for (auto i : b) {
        ++seen[i];
        cost += cfg.subsampled_length(ex[i].features.num_frames()) + ex[i].tokens.size() + 2;
      }
      CHECK((b.size() == 1 || cost <= budget));
    }
    for (int s : seen) CHECK(s == 1);
  }
  CHECK(make_batches(ex, cfg, 1).size() == ex.size());
  CHECK(make_batches(ex, cfg, 100000).size() == 1);
}

TEST_CASE("step-0 loss is close to ln V") {
  const auto ex = clean(8, 21);
  const auto r = pretrain(ex, tiny_config(15), quick(1));
  REQUIRE(r.curve.size() == 1);
  CHECK(std::abs(r.curve[0].loss - std::log(15.0)) < 0.1 * std::log(15.0));
  CHECK(r.steps == 1);
}

TEST_CASE("a single utterance is memorized") {
  const auto ex = clean(1, 4);
  auto cfg = tiny_config(15);
  cfg.dropout = 0.0f;
  auto tc = quick(300);
  tc.learning_rate = 5e-3f;
  const auto r = pretrain(ex, cfg, tc);
  double tail = 0.0;
  for (std::size_t i = r.curve.size() - 10; i < r.curve.size(); ++i) tail += r.curve[i].loss;
  CHECK(tail / 10.0 < 0.1);
}

TEST_CASE("smoothed training loss decreases") {
  const auto ex = clean(6, 8);
  auto tc = quick(200);
  tc.learning_rate = 3e-3f;
  const auto r = pretrain(ex, tiny_config(15), tc);
  REQUIRE(r.curve.size() == 200);
  // Means over consecutive 50-step windows.
  std::vector<double> means;
  for (std::size_t w = 0; w < 4; ++w) {
    double s = 0.0;
    for (std::size_t i = 0; i < 50; ++i) s += r.curve[w * 50 + i].loss;
    means.push_back(s / 50.0);
  }
  for (std::size_t w = 1; w < means.size(); ++w) CHECK(means[w] < means[w - 1]);
}

TEST_CASE("training is deterministic and independent of the execution policy") {
  const auto ex = clean(5, 13);
  auto tc = quick(6);
  tc.batch_tokens = 90;  // several multi-utterance batches
  const auto a = pretrain(ex, tiny_config(15), tc, {}, Exec::Serial);
  const auto b = pretrain(ex, tiny_config(15), tc, {}, Exec::Parallel);
  const auto c = pretrain(ex, tiny_config(15), tc, {}, Exec::Parallel);
  CHECK(a.model.params() == b.model.params());
  CHECK(b.model.params() == c.model.params());
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].loss == b.curve[i].loss);

  const auto vocab = mpa::testing::tone_vocab();
  CHECK(io::serialize_checkpoint({a.model, vocab, {}, 13, a.steps}) ==
        io::serialize_checkpoint({c.model, vocab, {}, 13, c.steps}));

  tc.seed = 4;
  const auto d = pretrain(ex, tiny_config(15), tc);
  CHECK_FALSE(d.model.params() == a.model.params());
}

TEST_CASE("pretrain input errors") {
  CHECK_THROWS_AS(pretrain({}, tiny_config(15), quick(1)), InvalidInput);
  auto ex = clean(2, 1);
  ex[1].tokens.ids.clear();
  CHECK_THROWS_AS(pretrain(ex, tiny_config(15), quick(1)), InvalidInput);
  ex = clean(2, 1);
  ex[0].features = dsp::MelSpectrogram{};
  CHECK_THROWS_AS(pretrain(ex, tiny_config(15), quick(1)), InvalidInput);
}

TEST_CASE("max_epochs bounds training when max_steps is unset") {
  const auto ex = clean(3, 2);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_tokens = 1;  // one utterance per batch
  const auto r = pretrain(ex, tiny_config(15), tc);
  CHECK(r.steps == 6);
  CHECK(r.curve.back().epoch == 1);
}

TEST_CASE("fine-tuning: label validation and skipped utterances") {
  const auto cfg = tiny_config(15);
  const model::MpaModel base(cfg, 1);
  auto ex = to_examples(io::synth::labeled_split("l", 3, 6));

  auto bad = ex;
  (*bad[1].labels)[0] = 3;
  CHECK_THROWS_AS(finetune(base, bad, text::Level::Phoneme, quick(1)), InvalidInput);
  bad = ex;
  (*bad[0].labels)[0] = -1;
  CHECK_THROWS_AS(finetune(base, bad, text::Level::Phoneme, quick(1)), InvalidInput);
  bad = ex;
  bad[2].labels->push_back(2);
  CHECK_THROWS_AS(finetune(base, bad, text::Level::Phoneme, quick(1)), InvalidInput);
  // Word range goes to 10.
  bad = ex;
  (*bad[1].labels)[0] = 7;
  CHECK_NOTHROW(finetune(base, bad, text::Level::Word, quick(1)));

  auto partial = ex;
  partial[1].labels.reset();
  std::vector<std::string> warnings;
  const auto r = finetune(base, partial, text::Level::Phoneme, quick(2), {},
                          [&](const std::string& w) { warnings.push_back(w); });
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find(partial[1].id) != std::string::npos);
  CHECK(r.model.has_score_head());

  for (auto& e : partial) e.labels.reset();
  CHECK_THROWS_AS(finetune(base, partial, text::Level::Phoneme, quick(1)), InvalidInput);
}

TEST_CASE("fine-tuning to a constant label") {
  auto ex = to_examples(io::synth::labeled_split("c", 4, 9));
  for (auto& e : ex) e.labels = std::vector<int>(e.tokens.size(), 1);
  auto tc = quick(150);
  tc.learning_rate = 3e-3f;
  auto cfg = tiny_config(15);
  cfg.dropout = 0.0f;
  const auto r = finetune(model::MpaModel(cfg, 2), ex, text::Level::Phoneme, tc);
  // Loss is MSE in normalized label units.
  CHECK(r.curve.back().loss < 1e-3);
}

TEST_CASE("fine-tuning fits a separable labeled set") {
  auto ex = to_examples(io::synth::labeled_split("s", 6, 10));
  auto tc = quick(300);
  tc.learning_rate = 3e-3f;
  auto cfg = tiny_config(15);
  cfg.dropout = 0.0f;
  const auto r = finetune(model::MpaModel(cfg, 5), ex, text::Level::Phoneme, tc);
  // 0.05 in label units (0..2) is 0.0125 after dividing by the label range.
  CHECK(r.curve.back().loss * 4.0 < 0.05);
}

TEST_CASE("a non-finite loss stops training with the step in the message") {
  const auto ex = clean(2, 3);
  auto params = model::MpaModel(tiny_config(15), 1).params();
  params.value(params.index("dec.out.b")).storage()[5] = std::numeric_limits<float>::infinity();
  const auto broken = model::MpaModel::from_parameters(tiny_config(15), params);
  try {
    pretrain_from(broken, ex, quick(3));
    FAIL("expected DivergedError");
  } catch (const DivergedError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}
