#include "mpa/text/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "mpa/error.hpp"
#include "mpa/io/atomic_file.hpp"

namespace mpa::text {

std::string_view to_string(Level level) {
  return level == Level::Word ? "word" : "phoneme";
}

Level parse_level(std::string_view s) {
  if (s == "word") return Level::Word;
  if (s == "phoneme") return Level::Phoneme;
  throw InvalidInput("unknown level '" + std::string(s) + "' (expected word|phoneme)");
}

const std::vector<std::string>& Vocabulary::reserved_tokens() {
  static const std::vector<std::string> r{"<pad>", "<unk>", "<s>", "</s>", "<mask>"};
  return r;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, Level level)
    : level_(level), tokens_(std::move(tokens)) {
  const auto& reserved = reserved_tokens();
  if (tokens_.size() < reserved.size()) {
    throw InvalidInput("vocabulary must hold at least the reserved tokens");
  }
  for (std::size_t i = 0; i < reserved.size(); ++i) {
    if (tokens_[i] != reserved[i]) {
      throw InvalidInput("vocabulary id " + std::to_string(i) + " must be '" + reserved[i] +
                         "', found '" + tokens_[i] + "'");
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw InvalidInput("empty vocabulary token at id " + std::to_string(i));
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<int>(i));
    if (!inserted) throw InvalidInput("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, Level level,
                             std::size_t max_size) {
  if (corpus.empty()) throw InvalidInput("cannot build a vocabulary from an empty corpus");
  if (max_size < kNumReserved + 1) throw InvalidInput("vocabulary max_size must be >= 6");

  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus) {
    for (auto& tok : split_whitespace(line)) ++counts[std::move(tok)];
  }
  const auto& reserved = reserved_tokens();
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, c] : counts) {
    if (std::find(reserved.begin(), reserved.end(), tok) == reserved.end()) {
      ranked.emplace_back(tok, c);
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = reserved;
  for (std::size_t i = 0; i < ranked.size() && tokens.size() < max_size; ++i) {
    tokens.push_back(ranked[i].first);
  }
  return Vocabulary(std::move(tokens), level);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, Level level) {
  return Vocabulary(std::move(tokens), level);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path, Level level) {
  std::istringstream in(io::read_file(path));
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  try {
    return Vocabulary(std::move(tokens), level);
  } catch (const InvalidInput& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id_or_unk(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InvalidInput("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

TokenSequence encode(std::string_view text, const Vocabulary& v) {
  TokenSequence seq;
  seq.level = v.level();
  for (const auto& tok : split_whitespace(text)) seq.ids.push_back(v.id_or_unk(tok));
  return seq;
}

std::string decode(const TokenSequence& t, const Vocabulary& v) {
  std::string out;
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    if (i) out += ' ';
    out += v.token(t.ids[i]);
  }
  return out;
}

}  // namespace mpa::text
