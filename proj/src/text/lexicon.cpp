#include "mpa/text/lexicon.hpp"

#include <cctype>
#include <sstream>

#include "mpa/error.hpp"
#include "mpa/io/atomic_file.hpp"

namespace mpa::text {

std::string normalize_word(std::string_view word) {
  std::string out;
  out.reserve(word.size());
  for (char c : word) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) || c == '\'' || uc >= 0x80) {
      out.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  return out;
}

bool Lexicon::add(std::string_view word, std::vector<std::string> phones) {
  auto [it, inserted] = entries_.try_emplace(normalize_word(word), std::move(phones));
  return inserted;
}

const std::vector<std::string>* Lexicon::lookup(std::string_view word) const {
  auto it = entries_.find(normalize_word(word));
  return it == entries_.end() ? nullptr : &it->second;
}

void Lexicon::check_symbols(const Vocabulary& phonemes) const {
  for (const auto& [word, phones] : entries_) {
    for (const auto& ph : phones) {
      if (!phonemes.find(ph)) {
        throw InvalidInput("lexicon entry '" + word + "' uses phoneme '" + ph +
                           "' missing from the phoneme vocabulary");
      }
    }
  }
}

Lexicon Lexicon::load(const std::filesystem::path& path, const Vocabulary& phonemes) {
  std::istringstream in(io::read_file(path));
  Lexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected word<TAB>phonemes");
    }
    auto phones = split_whitespace(std::string_view(line).substr(tab + 1));
    if (phones.empty()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": empty pronunciation");
    }
    lex.add(std::string_view(line).substr(0, tab), std::move(phones));
  }
  lex.check_symbols(phonemes);
  return lex;
}

TokenSequence phonemize(std::span<const std::string> words, const Lexicon& lex,
                        const Vocabulary& phonemes) {
  TokenSequence out;
  out.level = Level::Phoneme;
  for (const auto& w : words) {
    const auto* phones = lex.lookup(w);
    if (phones == nullptr) throw MissingPronunciation(w);
    for (const auto& ph : *phones) {
      auto id = phonemes.find(ph);
      if (!id) throw InvalidInput("phoneme '" + ph + "' missing from the phoneme vocabulary");
      out.ids.push_back(*id);
    }
  }
  return out;
}

TokenSequence phonemize(const TokenSequence& words, const Vocabulary& word_vocab,
                        const Lexicon& lex, const Vocabulary& phonemes) {
  std::vector<std::string> strs;
  strs.reserve(words.size());
  for (int id : words.ids) strs.push_back(word_vocab.token(id));
  return phonemize(strs, lex, phonemes);
}

}  // namespace mpa::text
