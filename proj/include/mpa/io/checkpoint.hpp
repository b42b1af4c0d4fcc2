#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mpa/io/keyvalue.hpp"
#include "mpa/model/mpa_model.hpp"
#include "mpa/text/vocab.hpp"

namespace mpa::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to resume or score: model (with optional head), the
// vocabulary it was trained with, and the provenance of the weights.
struct Checkpoint {
  model::MpaModel model;
  text::Vocabulary vocab;
  KeyValues train_config;  // `train.*` keys, informational
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

// Layout (little-endian):
//   "MPACKPT\0" u32 version
//   u32 n + bytes   key = value text (model.* and train.* keys)
//   u8 level, u32 count, count x (u32 n + bytes)   vocabulary
//   u64 seed, u64 step, u8 has_head
//   u32 count, count x (u32 n + name, u32 rank, rank x u64 dim, f32 data)
std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws FormatError on bad magic, unknown version, truncation or a
// parameter set that does not match the stored config.
Checkpoint deserialize_checkpoint(std::string_view bytes, std::string_view origin = "<checkpoint>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mpa::io
