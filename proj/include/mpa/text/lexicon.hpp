#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpa/text/vocab.hpp"

namespace mpa::text {

// Lower-cases and strips punctuation other than apostrophes.
std::string normalize_word(std::string_view word);

// Word -> phoneme symbols. One pronunciation per word; the first entry for a
// word wins.
class Lexicon {
 public:
  Lexicon() = default;

  // `word<TAB>PH1 PH2 ...` per line. Every symbol must be in `phonemes`.
  static Lexicon load(const std::filesystem::path& path, const Vocabulary& phonemes);

  // Returns false if the word already had a pronunciation.
  bool add(std::string_view word, std::vector<std::string> phones);
  const std::vector<std::string>* lookup(std::string_view word) const;
  std::size_t size() const { return entries_.size(); }

  // Throws InvalidInput naming the first symbol missing from `phonemes`.
  void check_symbols(const Vocabulary& phonemes) const;

 private:
  std::map<std::string, std::vector<std::string>, std::less<>> entries_;
};

// Concatenated per-word pronunciations encoded in `phonemes`. Throws
// MissingPronunciation for the first word without an entry.
TokenSequence phonemize(std::span<const std::string> words, const Lexicon& lex,
                        const Vocabulary& phonemes);
TokenSequence phonemize(const TokenSequence& words, const Vocabulary& word_vocab,
                        const Lexicon& lex, const Vocabulary& phonemes);

}  // namespace mpa::text
