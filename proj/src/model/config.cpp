#include "mpa/model/config.hpp"

#include "mpa/error.hpp"
#include "mpa/io/keyvalue.hpp"

namespace mpa::model {

void ModelConfig::validate() const {
  const std::pair<const char*, std::size_t> dims[] = {
      {"d_model", d_model},       {"n_heads", n_heads},
      {"n_encoder_layers", n_encoder_layers}, {"n_decoder_layers", n_decoder_layers},
      {"ffn_dim", ffn_dim},       {"vocab_size", vocab_size},
      {"n_mel", n_mel},           {"conv_kernel", conv_kernel},
      {"conv_stride", conv_stride}, {"conv_layers", conv_layers},
      {"max_positions", max_positions}};
  for (const auto& [name, v] : dims) {
    if (v == 0) throw InvalidInput(std::string("model.") + name + " must be positive");
  }
  if (d_model % n_heads != 0) throw InvalidInput("model.d_model must be divisible by model.n_heads");
  if (conv_kernel % 2 == 0) throw InvalidInput("model.conv_kernel must be odd");
  if (!(dropout >= 0.0f && dropout < 1.0f)) throw InvalidInput("model.dropout must be in [0, 1)");
}

std::size_t ModelConfig::subsampled_length(std::size_t frames) const {
  std::size_t t = frames;
  for (std::size_t i = 0; i < conv_layers; ++i) t = (t + conv_stride - 1) / conv_stride;
  return t;
}

ModelConfig ModelConfig::desk_default(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::toy(std::size_t vocab_size) {
  ModelConfig c;
  c.d_model = 64;
  c.n_heads = 4;
  c.n_encoder_layers = 2;
  c.n_decoder_layers = 2;
  c.ffn_dim = 128;
  // Twenty utterances are memorized quickly; heavier dropout keeps the
  // cross-attention tied to the audio instead of to the text.
  c.dropout = 0.3f;
  c.vocab_size = vocab_size;
  return c;
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {{"model.d_model", std::to_string(d_model)},
          {"model.n_heads", std::to_string(n_heads)},
          {"model.n_encoder_layers", std::to_string(n_encoder_layers)},
          {"model.n_decoder_layers", std::to_string(n_decoder_layers)},
          {"model.ffn_dim", std::to_string(ffn_dim)},
          {"model.dropout", io::format_float(dropout)},
          {"model.vocab_size", std::to_string(vocab_size)},
          {"model.n_mel", std::to_string(n_mel)},
          {"model.conv_kernel", std::to_string(conv_kernel)},
          {"model.conv_stride", std::to_string(conv_stride)},
          {"model.conv_layers", std::to_string(conv_layers)},
          {"model.max_positions", std::to_string(max_positions)}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv, ModelConfig c) {
  for (const auto& [key, value] : kv) {
    if (key.rfind("model.", 0) != 0) continue;
    const std::string f = key.substr(6);
    if (f == "d_model") c.d_model = io::parse_size(key, value);
    else if (f == "n_heads") c.n_heads = io::parse_size(key, value);
    else if (f == "n_encoder_layers") c.n_encoder_layers = io::parse_size(key, value);
    else if (f == "n_decoder_layers") c.n_decoder_layers = io::parse_size(key, value);
    else if (f == "ffn_dim") c.ffn_dim = io::parse_size(key, value);
    else if (f == "dropout") c.dropout = static_cast<float>(io::parse_double(key, value));
    else if (f == "vocab_size") c.vocab_size = io::parse_size(key, value);
    else if (f == "n_mel") c.n_mel = io::parse_size(key, value);
    else if (f == "conv_kernel") c.conv_kernel = io::parse_size(key, value);
    else if (f == "conv_stride") c.conv_stride = io::parse_size(key, value);
    else if (f == "conv_layers") c.conv_layers = io::parse_size(key, value);
    else if (f == "max_positions") c.max_positions = io::parse_size(key, value);
    else throw FormatError("unknown config key '" + key + "'");
  }
  return c;
}

}  // namespace mpa::model
