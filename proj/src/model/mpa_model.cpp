#include "mpa/model/mpa_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mpa/error.hpp"
#include "mpa/nn/rng.hpp"

namespace mpa::model {

using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

enum class Init { Ones, Zeros, Xavier, Embedding, Output };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
};

void add_linear(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t in,
                std::size_t outd, Init init = Init::Xavier) {
  out.push_back({prefix + ".w", {in, outd}, init});
  out.push_back({prefix + ".b", {outd}, Init::Zeros});
}

void add_norm(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d) {
  out.push_back({prefix + ".g", {d}, Init::Ones});
  out.push_back({prefix + ".b", {d}, Init::Zeros});
}

void add_attention(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d) {
  for (const char* p : {".q", ".k", ".v", ".o"}) add_linear(out, prefix + p, d, d);
}

void add_ffn(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t d,
             std::size_t ffn) {
  add_linear(out, prefix + ".fc1", d, ffn);
  add_linear(out, prefix + ".fc2", ffn, d);
}

std::vector<ParamSpec> layout(const ModelConfig& c) {
  std::vector<ParamSpec> out;
  const std::size_t d = c.d_model;
  add_norm(out, "enc.input_norm", c.n_mel);
  for (std::size_t i = 0; i < c.conv_layers; ++i) {
    const std::size_t c_in = i == 0 ? c.n_mel : d;
    const std::string p = "enc.conv" + std::to_string(i);
    out.push_back({p + ".w", {c.conv_kernel, c_in, d}, Init::Xavier});
    out.push_back({p + ".b", {d}, Init::Zeros});
  }
  for (std::size_t l = 0; l < c.n_encoder_layers; ++l) {
    const std::string p = "enc.layer" + std::to_string(l);
    add_norm(out, p + ".ln_attn", d);
    add_attention(out, p + ".self", d);
    add_norm(out, p + ".ln_ffn", d);
    add_ffn(out, p + ".ffn", d, c.ffn_dim);
  }
  add_norm(out, "enc.final_norm", d);

  out.push_back({"dec.embed", {c.vocab_size, d}, Init::Embedding});
  for (std::size_t l = 0; l < c.n_decoder_layers; ++l) {
    const std::string p = "dec.layer" + std::to_string(l);
    add_norm(out, p + ".ln_self", d);
    add_attention(out, p + ".self", d);
    add_norm(out, p + ".ln_cross", d);
    add_attention(out, p + ".cross", d);
    add_norm(out, p + ".ln_ffn", d);
    add_ffn(out, p + ".ffn", d, c.ffn_dim);
  }
  add_norm(out, "dec.final_norm", d);
  add_linear(out, "dec.out", d, c.vocab_size, Init::Output);
  return out;
}

Tensor init_tensor(const ParamSpec& spec, std::uint64_t seed, std::size_t index,
                   const ModelConfig& c) {
  Tensor t(spec.shape);
  double bound = 0.0;
  switch (spec.init) {
    case Init::Ones:
      for (float& v : t.data()) v = 1.0f;
      return t;
    case Init::Zeros:
      return t;
    case Init::Xavier: {
      // Conv kernels are [k x c_in x c_out]; fan_in covers the whole window.
      std::size_t fan_in = 1;
      for (std::size_t i = 0; i + 1 < spec.shape.size(); ++i) fan_in *= spec.shape[i];
      const std::size_t fan_out = spec.shape.back();
      bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      break;
    }
    case Init::Embedding:
      bound = std::sqrt(3.0) / std::sqrt(static_cast<double>(c.d_model));
      break;
    case Init::Output:
      bound = std::sqrt(3.0) * 0.02;
      break;
  }
  const std::uint64_t base = nn::mix_key({seed, index});
  auto data = t.data();
  for (std::size_t j = 0; j < data.size(); ++j) {
    const double u = nn::unit_float(nn::splitmix64(base + j));
    data[j] = static_cast<float>((2.0 * u - 1.0) * bound);
  }
  return t;
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config) {
  std::vector<std::pair<std::string, Shape>> out;
  for (auto& s : layout(config)) out.emplace_back(std::move(s.name), std::move(s.shape));
  return out;
}

Tensor sinusoidal_positions(std::size_t length, std::size_t d_model) {
  Tensor pe({length, d_model});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
      const double angle = static_cast<double>(pos) * freq;
      pe.at(pos, i) = static_cast<float>(std::sin(angle));
      if (i + 1 < d_model) pe.at(pos, i + 1) = static_cast<float>(std::cos(angle));
    }
  }
  return pe;
}

MpaModel::MpaModel(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  const auto specs = layout(config_);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    params_.add(specs[i].name, init_tensor(specs[i], init_seed, i, config_));
  }
}

MpaModel::MpaModel(ModelConfig config, nn::ParameterStore params)
    : config_(std::move(config)), params_(std::move(params)) {}

MpaModel MpaModel::from_parameters(ModelConfig config, nn::ParameterStore params) {
  config.validate();
  for (const auto& [name, shape] : parameter_layout(config)) {
    auto idx = params.find(name);
    if (!idx) throw FormatError("checkpoint is missing parameter '" + name + "'");
    if (params.value(*idx).shape() != shape) {
      throw FormatError("parameter '" + name + "' has shape " +
                        nn::shape_str(params.value(*idx).shape()) + ", expected " +
                        nn::shape_str(shape));
    }
  }
  const std::size_t expected = parameter_layout(config).size();
  const bool head = params.find("head.w").has_value();
  if (params.size() != expected + (head ? 2 : 0)) {
    throw FormatError("checkpoint has unexpected extra parameters");
  }
  if (head) {
    const auto& w = params.value(params.index("head.w"));
    auto b = params.find("head.b");
    if (!b || w.shape() != Shape{config.d_model, 1} || params.value(*b).shape() != Shape{1}) {
      throw FormatError("malformed score head in checkpoint");
    }
  }
  return MpaModel(std::move(config), std::move(params));
}

bool MpaModel::has_score_head() const { return params_.find("head.w").has_value(); }

void MpaModel::add_score_head() {
  if (has_score_head()) throw InvalidState("model already has a score head");
  params_.add("head.w", Tensor({config_.d_model, 1}));
  params_.add("head.b", Tensor({1}, 0.5f));
}

Var MpaModel::linear(Tape& tape, Var x, const std::string& prefix) const {
  Var w = tape.parameter(params_, prefix + ".w");
  Var b = tape.parameter(params_, prefix + ".b");
  return nn::add(nn::matmul(x, w), b);
}

Var MpaModel::norm(Tape& tape, Var x, const std::string& prefix) const {
  return nn::layer_norm(x, tape.parameter(params_, prefix + ".g"),
                        tape.parameter(params_, prefix + ".b"));
}

Var MpaModel::drop(Var x, const ForwardOptions& opts, std::uint64_t& dropout_layer) const {
  const std::uint64_t layer = dropout_layer++;
  if (!opts.train || config_.dropout <= 0.0f) return x;
  return nn::dropout(x, config_.dropout, opts.dropout_key.with_layer(layer));
}

Var MpaModel::attention(Tape& tape, Var query, Var memory, const std::string& prefix,
                        Tensor* averaged_probs) const {
  const std::size_t heads = config_.n_heads;
  const std::size_t dh = config_.head_dim();
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
  Var q = linear(tape, query, prefix + ".q");
  Var k = linear(tape, memory, prefix + ".k");
  Var v = linear(tape, memory, prefix + ".v");
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = nn::slice_cols(q, h * dh, dh);
    Var kh = nn::slice_cols(k, h * dh, dh);
    Var vh = nn::slice_cols(v, h * dh, dh);
    Var probs = nn::softmax(nn::scale(nn::matmul_nt(qh, kh), inv_sqrt), 1);
    if (averaged_probs != nullptr) {
      const Tensor& p = probs.value();
      if (h == 0) *averaged_probs = Tensor(p.shape());
      auto dst = averaged_probs->data();
      auto src = p.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    outs.push_back(nn::matmul(probs, vh));
  }
  if (averaged_probs != nullptr) {
    for (float& x : averaged_probs->data()) x /= static_cast<float>(heads);
  }
  return linear(tape, nn::concat_cols(outs), prefix + ".o");
}

Var MpaModel::feed_forward(Tape& tape, Var x, const std::string& prefix,
                           const ForwardOptions& opts, std::uint64_t& dropout_layer) const {
  Var h = nn::gelu(linear(tape, x, prefix + ".fc1"));
  h = drop(h, opts, dropout_layer);
  return linear(tape, h, prefix + ".fc2");
}

Var MpaModel::encode_audio(Tape& tape, const dsp::MelSpectrogram& x,
                           const ForwardOptions& opts) const {
  const std::size_t frames = x.num_frames();
  if (frames == 0) throw InvalidInput("cannot encode an empty spectrogram");
  const std::size_t t_out = config_.subsampled_length(frames);
  if (t_out > config_.max_positions) {
    throw InvalidInput("audio too long: " + std::to_string(t_out) + " encoder positions exceed " +
                       std::to_string(config_.max_positions));
  }
  std::uint64_t dropout_layer = 0;
  Var h = tape.constant(Tensor({frames, config_.n_mel}, x.values()));
  h = norm(tape, h, "enc.input_norm");
  for (std::size_t i = 0; i < config_.conv_layers; ++i) {
    const std::string p = "enc.conv" + std::to_string(i);
    h = nn::conv1d(h, tape.parameter(params_, p + ".w"), tape.parameter(params_, p + ".b"),
                   config_.conv_stride);
    if (i + 1 < config_.conv_layers) h = nn::gelu(h);
  }
  h = nn::add(h, tape.constant(sinusoidal_positions(h.value().dim(0), config_.d_model)));
  h = drop(h, opts, dropout_layer);
  for (std::size_t l = 0; l < config_.n_encoder_layers; ++l) {
    const std::string p = "enc.layer" + std::to_string(l);
    Var a = norm(tape, h, p + ".ln_attn");
    a = attention(tape, a, a, p + ".self", nullptr);
    h = nn::add(h, drop(a, opts, dropout_layer));
    Var f = feed_forward(tape, norm(tape, h, p + ".ln_ffn"), p + ".ffn", opts, dropout_layer);
    h = nn::add(h, drop(f, opts, dropout_layer));
  }
  return norm(tape, h, "enc.final_norm");
}

DecoderOutput MpaModel::decode(Tape& tape, std::span<const int> decoder_ids, Var encoder_states,
                               const ForwardOptions& opts) const {
  if (decoder_ids.empty()) throw InvalidInput("decoder input is empty");
  if (decoder_ids.size() > config_.max_positions) {
    throw InvalidInput("decoder input longer than model.max_positions");
  }
  for (int id : decoder_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw InvalidInput("token id " + std::to_string(id) + " outside vocabulary of size " +
                         std::to_string(config_.vocab_size));
    }
  }
  const std::size_t len = decoder_ids.size();
  const std::size_t d = config_.d_model;
  // Streams 0..999 are taken by the encoder's dropout sites.
  std::uint64_t dropout_layer = 1000;
  if (opts.trace != nullptr) {
    opts.trace->self_attention.assign(config_.n_decoder_layers, Tensor());
    opts.trace->cross_attention.assign(config_.n_decoder_layers, Tensor());
  }

  Var h = nn::embedding(tape.parameter(params_, "dec.embed"), decoder_ids);
  h = nn::scale(h, std::sqrt(static_cast<float>(d)));
  h = nn::add(h, tape.constant(sinusoidal_positions(len, d)));
  h = drop(h, opts, dropout_layer);
  for (std::size_t l = 0; l < config_.n_decoder_layers; ++l) {
    const std::string p = "dec.layer" + std::to_string(l);
    Tensor* self_trace = opts.trace ? &opts.trace->self_attention[l] : nullptr;
    Tensor* cross_trace = opts.trace ? &opts.trace->cross_attention[l] : nullptr;
    Var a = norm(tape, h, p + ".ln_self");
    a = attention(tape, a, a, p + ".self", self_trace);
    h = nn::add(h, drop(a, opts, dropout_layer));
    Var c = attention(tape, norm(tape, h, p + ".ln_cross"), encoder_states, p + ".cross", cross_trace);
    h = nn::add(h, drop(c, opts, dropout_layer));
    Var f = feed_forward(tape, norm(tape, h, p + ".ln_ffn"), p + ".ffn", opts, dropout_layer);
    h = nn::add(h, drop(f, opts, dropout_layer));
  }
  Var hidden = norm(tape, h, "dec.final_norm");
  Var logits = linear(tape, hidden, "dec.out");
  return {hidden, logits};
}

Var MpaModel::score_head(Tape& tape, Var hidden) const {
  if (!has_score_head()) throw InvalidState("model has no score head; fine-tune first");
  return linear(tape, hidden, "head");
}

std::vector<int> decoder_input(const text::TokenSequence& y, const train::MaskPattern& masked) {
  std::vector<int> ids;
  ids.reserve(y.size() + 2);
  ids.push_back(text::kBos);
  ids.insert(ids.end(), y.ids.begin(), y.ids.end());
  ids.push_back(text::kEos);
  for (std::size_t p : masked.positions) {
    if (p >= y.size()) throw InvalidInput("mask position " + std::to_string(p) + " out of range");
    ids[p + 1] = text::kMask;
  }
  return ids;
}

std::vector<int> decoder_input(const text::TokenSequence& y) {
  return decoder_input(y, train::MaskPattern{});
}

Var masked_nll(Tape& tape, const MpaModel& model, Var encoder_states, const text::TokenSequence& y,
               const train::MaskPattern& mask, const ForwardOptions& opts,
               nn::Reduction reduction) {
  mask.validate(y.size());
  const std::vector<int> input = decoder_input(y, mask);
  DecoderOutput out = model.decode(tape, input, encoder_states, opts);
  std::vector<int> targets(input.size(), text::kPad);
  std::vector<bool> selected(input.size(), false);
  for (std::size_t p : mask.positions) {
    targets[p + 1] = y.ids[p];
    selected[p + 1] = true;
  }
  return nn::cross_entropy(out.logits, targets, selected, reduction);
}

double masked_nll(const MpaModel& model, const dsp::MelSpectrogram& x, const text::TokenSequence& y,
                  const train::MaskPattern& mask) {
  mask.validate(y.size());
  Tape tape(false);
  Var enc = model.encode_audio(tape, x);
  const std::vector<int> input = decoder_input(y, mask);
  const auto logits = model.decode(tape, input, enc).logits.value();
  // Log-softmax in double: the float loss would round away differences that
  // matter for finite-difference checks.
  double total = 0.0;
  for (std::size_t p : mask.positions) {
    const auto row = logits.row(p + 1);
    double m = -std::numeric_limits<double>::infinity();
    for (float v : row) m = std::max(m, double(v));
    double z = 0.0;
    for (float v : row) z += std::exp(double(v) - m);
    total -= double(row[std::size_t(y.ids[p])]) - m - std::log(z);
  }
  return total / double(mask.size());
}

}  // namespace mpa::model
