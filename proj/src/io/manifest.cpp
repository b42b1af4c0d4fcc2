#include "mpa/io/manifest.hpp"

#include <json.hpp>
#include <set>

#include "mpa/error.hpp"
#include "mpa/io/atomic_file.hpp"

namespace mpa::io {

using nlohmann::json;

std::vector<ManifestEntry> parse_manifest(std::string_view jsonl, const std::filesystem::path& base_dir,
                                          std::string_view origin) {
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    std::string_view line = jsonl.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(lineno);

    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(where + ": invalid JSON: " + e.what());
    }
    ManifestEntry e;
    try {
      e.id = j.at("id").get<std::string>();
      e.audio = j.at("audio").get<std::string>();
      e.text = j.at("text").get<std::string>();
      e.level = text::parse_level(j.value("level", std::string("word")));
      if (j.contains("labels") && !j["labels"].is_null()) {
        e.labels = j["labels"].get<std::vector<int>>();
      }
    } catch (const json::exception& ex) {
      throw FormatError(where + ": bad manifest entry: " + ex.what());
    } catch (const InvalidInput& ex) {
      throw FormatError(where + ": " + ex.what());
    }
    const std::string tag = where + ": entry '" + e.id + "'";
    if (e.id.empty()) throw FormatError(where + ": empty id");
    if (!seen.insert(e.id).second) throw FormatError(tag + ": duplicate id");
    if (e.audio.is_relative()) e.audio = base_dir / e.audio;
    if (e.labels) {
      const auto ntok = text::split_whitespace(e.text).size();
      if (e.labels->size() != ntok) {
        throw FormatError(tag + ": " + std::to_string(e.labels->size()) + " labels for " +
                          std::to_string(ntok) + " tokens");
      }
      const int top = e.level == text::Level::Phoneme ? 2 : 10;
      for (int l : *e.labels) {
        if (l < 0 || l > top) {
          throw FormatError(tag + ": label " + std::to_string(l) + " outside [0, " +
                            std::to_string(top) + "]");
        }
      }
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path(), path.string());
}

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  const auto base = path.parent_path();
  std::string out;
  for (const auto& e : entries) {
    json j;
    j["id"] = e.id;
    std::filesystem::path audio = e.audio;
    if (audio.is_absolute() && !base.empty()) {
      auto rel = audio.lexically_relative(std::filesystem::absolute(base));
      if (!rel.empty() && *rel.begin() != "..") audio = rel;
    } else if (!base.empty()) {
      auto rel = audio.lexically_relative(base);
      if (!rel.empty() && *rel.begin() != "..") audio = rel;
    }
    j["audio"] = audio.generic_string();
    j["text"] = e.text;
    j["level"] = std::string(text::to_string(e.level));
    if (e.labels) j["labels"] = *e.labels;
    out += j.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

}  // namespace mpa::io
