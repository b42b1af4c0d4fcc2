#pragma once

#include <cstddef>
#include <map>
#include <string>

namespace mpa::model {

struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t n_encoder_layers = 4;
  std::size_t n_decoder_layers = 4;
  std::size_t ffn_dim = 512;
  float dropout = 0.1f;
  std::size_t vocab_size = 0;
  std::size_t n_mel = 80;
  std::size_t conv_kernel = 5;
  std::size_t conv_stride = 2;
  std::size_t conv_layers = 2;
  std::size_t max_positions = 1024;

  // Throws InvalidInput on a non-positive dimension or d_model % n_heads != 0.
  void validate() const;

  std::size_t head_dim() const { return d_model / n_heads; }
  // Encoder output length for t input frames: ceil(t / stride) per conv.
  std::size_t subsampled_length(std::size_t frames) const;

  // 128-d, 4 heads, 4 + 4 layers, ffn 512, dropout 0.1.
  static ModelConfig desk_default(std::size_t vocab_size);
  // 64-d, 4 heads, 2 + 2 layers, ffn 128, dropout 0.3; sized for the
  // synthetic corpus.
  static ModelConfig toy(std::size_t vocab_size);

  // `model.<field>` keys, values as decimal text.
  std::map<std::string, std::string> to_map() const;
  // Unknown `model.*` keys are rejected; missing ones keep `base` values.
  static ModelConfig from_map(const std::map<std::string, std::string>& kv, ModelConfig base);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace mpa::model
