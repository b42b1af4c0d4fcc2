#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mpa::text {

enum class Level { Word, Phoneme };

std::string_view to_string(Level level);
Level parse_level(std::string_view s);  // "word" | "phoneme"

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline constexpr int kMask = 4;
inline constexpr int kNumReserved = 5;

// Bijective token <-> id map with the five reserved ids fixed at 0..4.
class Vocabulary {
 public:
  // The five reserved tokens plus the (max_size - 5) most frequent
  // whitespace tokens of `corpus`; frequency ties break lexicographically.
  static Vocabulary build(std::span<const std::string> corpus, Level level,
                          std::size_t max_size);

  // `tokens[i]` gets id i. The first five must be the reserved tokens.
  static Vocabulary from_tokens(std::vector<std::string> tokens, Level level);

  // One token per line, line number - 1 = id.
  static Vocabulary load(const std::filesystem::path& path, Level level);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  Level level() const { return level_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<int> find(std::string_view token) const;
  int id_or_unk(std::string_view token) const;
  const std::string& token(int id) const;

  static const std::vector<std::string>& reserved_tokens();

 private:
  Vocabulary(std::vector<std::string> tokens, Level level);

  Level level_ = Level::Word;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct TokenSequence {
  std::vector<int> ids;
  Level level = Level::Word;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

std::vector<std::string> split_whitespace(std::string_view text);

// Whitespace split; out-of-vocabulary tokens map to UNK.
TokenSequence encode(std::string_view text, const Vocabulary& v);
// Space-joined token strings. Throws InvalidInput for ids outside `v`.
std::string decode(const TokenSequence& t, const Vocabulary& v);

}  // namespace mpa::text
