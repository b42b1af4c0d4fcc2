#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mpa/text/vocab.hpp"

namespace mpa::io {

// One JSONL manifest line:
//   {"id": "...", "audio": "wavs/x.wav", "text": "...", "level": "word|phoneme",
//    "labels": [int, ...]}   (labels optional)
struct ManifestEntry {
  std::string id;
  std::filesystem::path audio;  // resolved against the manifest directory on load
  std::string text;
  text::Level level = text::Level::Word;
  std::optional<std::vector<int>> labels;
};

// Throws FormatError (naming the entry id and line) for malformed JSON,
// missing fields, duplicate ids, labels outside the level's range, or a
// label count different from the whitespace token count of `text`.
std::vector<ManifestEntry> parse_manifest(std::string_view jsonl, const std::filesystem::path& base_dir,
                                          std::string_view origin = "<manifest>");
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

// Audio paths are written relative to `path`'s directory when possible.
void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

}  // namespace mpa::io
