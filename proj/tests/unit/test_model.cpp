#include <doctest.h>

#include <cmath>
#include <random>

#include "mpa/error.hpp"
#include "mpa/model/mpa_model.hpp"
#include "mpa/score/scorer.hpp"

using namespace mpa;
using namespace mpa::model;

namespace {

ModelConfig tiny(std::size_t vocab = 12) {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_encoder_layers = 1;
  c.n_decoder_layers = 2;
  c.ffn_dim = 24;
  c.dropout = 0.1f;
  c.vocab_size = vocab;
  return c;
}

dsp::MelSpectrogram random_mel(std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(-5.0f, 2.0f);
  std::vector<float> v(frames * dsp::kNumMel);
  for (auto& x : v) x = g(rng);
  return dsp::MelSpectrogram(frames, std::move(v));
}

text::TokenSequence seq(std::vector<int> ids) { return {std::move(ids), text::Level::Phoneme}; }

}  // namespace

TEST_CASE("subsampled length") {
  const auto c = tiny();
  CHECK(c.subsampled_length(98) == 25);
  CHECK(c.subsampled_length(4) == 1);
  for (std::size_t t = 1; t <= 1000; ++t) CHECK(c.subsampled_length(t) == ((t + 1) / 2 + 1) / 2);

  const MpaModel m(c, 1);
  for (std::size_t t : {1u, 4u, 7u, 98u}) {
    nn::Tape tape(false);
    const auto enc = m.encode_audio(tape, random_mel(t, t)).value();
    CHECK(enc.dim(0) == c.subsampled_length(t));
    CHECK(enc.dim(1) == c.d_model);
    CHECK(enc.all_finite());
  }
  nn::Tape tape(false);
  CHECK_THROWS_AS(m.encode_audio(tape, dsp::MelSpectrogram{}), InvalidInput);
}

TEST_CASE("config validation and key/value round trip") {
  auto c = tiny();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = tiny();
  c.ffn_dim = 0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);

  const auto t = ModelConfig::toy(15);
  CHECK(ModelConfig::from_map(t.to_map(), ModelConfig{}) == t);
  const auto d = ModelConfig::desk_default(70);
  CHECK(d.d_model == 128);
  CHECK(d.n_heads == 4);
  CHECK(d.n_encoder_layers == 4);
  CHECK(d.n_decoder_layers == 4);
  CHECK(d.ffn_dim == 512);
  CHECK(d.dropout == doctest::Approx(0.1));
  CHECK_THROWS(ModelConfig::from_map({{"model.colour", "red"}}, ModelConfig{}));
}

TEST_CASE("decoder input framing") {
  const auto y = seq({7, 8, 9});
  CHECK(decoder_input(y) == std::vector<int>{text::kBos, 7, 8, 9, text::kEos});
  CHECK(decoder_input(y, train::MaskPattern{{0, 2}}) ==
        std::vector<int>{text::kBos, text::kMask, 8, text::kMask, text::kEos});
}

TEST_CASE("decoder shapes, all-mask validity, id range") {
  const auto c = tiny();
  const MpaModel m(c, 2);
  nn::Tape tape(false);
  auto enc = m.encode_audio(tape, random_mel(30, 1));
  CHECK(m.decode(tape, std::vector<int>{7}, enc).logits.shape() == nn::Shape{1, c.vocab_size});
  const auto all_mask = m.decode(tape, std::vector<int>(6, text::kMask), enc).logits.value();
  CHECK(all_mask.dim(0) == 6);
  CHECK(all_mask.all_finite());
  CHECK_THROWS_AS(m.decode(tape, std::vector<int>{3, int(c.vocab_size)}, enc), InvalidInput);
  CHECK_THROWS_AS(m.decode(tape, std::vector<int>{}, enc), InvalidInput);
}

TEST_CASE("decoder is bidirectional") {
  const auto c = tiny();
  const MpaModel m(c, 3);
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> tok(5, int(c.vocab_size) - 1);
  for (int trial = 0; trial < 10; ++trial) {
    nn::Tape tape(false);
    auto enc = m.encode_audio(tape, random_mel(20 + trial, trial));
    std::vector<int> ids(5);
    for (auto& v : ids) v = tok(rng);
    auto perturbed = ids;
    perturbed.back() = perturbed.back() == 5 ? 6 : 5;
    const auto a = m.decode(tape, ids, enc).logits.value();
    const auto b = m.decode(tape, perturbed, enc).logits.value();
    double delta = 0.0;
    for (std::size_t v = 0; v < c.vocab_size; ++v) delta += std::abs(a.at(0, v) - b.at(0, v));
    CHECK(delta > 0.0);
  }
}

TEST_CASE("attention rows sum to one") {
  const auto c = tiny();
  const MpaModel m(c, 5);
  nn::Tape tape(false);
  auto enc = m.encode_audio(tape, random_mel(33, 2));
  DecoderTrace trace;
  ForwardOptions opts;
  opts.trace = &trace;
  m.decode(tape, std::vector<int>{2, 7, 4, 9, 3}, enc, opts);
  REQUIRE(trace.cross_attention.size() == c.n_decoder_layers);
  REQUIRE(trace.self_attention.size() == c.n_decoder_layers);
  for (const auto* maps : {&trace.cross_attention, &trace.self_attention})
    for (const auto& a : *maps)
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (float v : a.row(r)) s += v;
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
  CHECK(trace.cross_attention[0].dim(1) == c.subsampled_length(33));
}

TEST_CASE("single-position masked NLL equals minus the token score") {
  const auto c = tiny();
  const MpaModel m(c, 6);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> tok(5, int(c.vocab_size) - 1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_mel(25, 100 + trial);
    auto y = seq({tok(rng), tok(rng), tok(rng), tok(rng)});
    const std::size_t i = std::size_t(trial) % y.size();
    const double nll = masked_nll(m, x, y, train::MaskPattern::single(i));
    CHECK(std::abs(nll + score::score_token(m, x, y, i)) < 1e-6);
  }
}

TEST_CASE("uniform logits give ln V") {
  const auto c = tiny(15);
  auto params = MpaModel(c, 8).params();
  for (auto& v : params.value(params.index("dec.out.w")).storage()) v = 0.0f;
  for (auto& v : params.value(params.index("dec.out.b")).storage()) v = 0.0f;
  const auto m = MpaModel::from_parameters(c, params);
  const double nll = masked_nll(m, random_mel(20, 3), seq({5, 6, 7}), train::MaskPattern{{0, 2}});
  CHECK(nll == doctest::Approx(std::log(15.0)).epsilon(1e-6));
}

TEST_CASE("score head") {
  const auto c = tiny();
  MpaModel m(c, 9);
  CHECK_FALSE(m.has_score_head());
  nn::Tape tape(false);
  auto enc = m.encode_audio(tape, random_mel(20, 4));
  auto out = m.decode(tape, decoder_input(seq({5, 6, 7})), enc);
  CHECK_THROWS_AS(m.score_head(tape, out.hidden), InvalidState);
  m.add_score_head();
  CHECK(m.has_score_head());
  CHECK_THROWS_AS(m.add_score_head(), InvalidState);
  const auto s = m.score_head(tape, out.hidden).value();
  CHECK(s.shape() == nn::Shape{5, 1});
  for (float v : s.data()) CHECK(v == 0.5f);
}

TEST_CASE("initialization is deterministic per seed; parameters validated on adoption") {
  const auto c = tiny();
  CHECK(MpaModel(c, 1).params() == MpaModel(c, 1).params());
  CHECK_FALSE(MpaModel(c, 1).params() == MpaModel(c, 2).params());

  auto p = MpaModel(c, 1).params();
  CHECK_NOTHROW(MpaModel::from_parameters(c, p));
  auto wrong = c;
  wrong.ffn_dim = 32;
  CHECK_THROWS_AS(MpaModel::from_parameters(wrong, p), FormatError);

  nn::ParameterStore partial;
  partial.add("enc.input_norm.g", nn::Tensor({80}, 1.0f));
  CHECK_THROWS_AS(MpaModel::from_parameters(c, partial), FormatError);

  // Every layout entry is present with its declared shape.
  for (const auto& [name, shape] : parameter_layout(c)) {
    REQUIRE(p.find(name).has_value());
    CHECK(p.value(p.index(name)).shape() == shape);
  }
}

TEST_CASE("sinusoidal positions") {
  const auto pe = sinusoidal_positions(4, 8);
  CHECK(pe.shape() == nn::Shape{4, 8});
  for (std::size_t c = 0; c < 8; ++c) CHECK(pe.at(0, c) == (c % 2 == 0 ? 0.0f : 1.0f));
  CHECK(pe.at(1, 0) == doctest::Approx(std::sin(1.0)));
}

TEST_CASE("dropout only in training mode, keyed deterministically") {
  const auto c = tiny();
  const MpaModel m(c, 10);
  const auto x = random_mel(20, 5);
  auto run = [&](bool train, std::uint64_t step) {
    nn::Tape tape(false);
    ForwardOptions opts;
    opts.train = train;
    opts.dropout_key = nn::DropoutKey{1, 0, step, 0};
    auto enc = m.encode_audio(tape, x, opts);
    return m.decode(tape, std::vector<int>{2, 5, 6, 3}, enc, opts).logits.value();
  };
  CHECK(run(false, 0) == run(false, 1));
  CHECK(run(true, 0) == run(true, 0));
  CHECK_FALSE(run(true, 0) == run(true, 1));
  CHECK_FALSE(run(true, 0) == run(false, 0));
}
