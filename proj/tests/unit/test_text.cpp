#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "mpa/error.hpp"
#include "mpa/text/lexicon.hpp"
#include "mpa/text/vocab.hpp"

using namespace mpa;
using namespace mpa::text;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "mpa_test_text";
  fs::create_directories(dir);
  return dir / name;
}

Vocabulary phoneme_vocab() {
  auto t = Vocabulary::reserved_tokens();
  for (const char* p : {"K", "AE", "T", "D", "AO", "G"}) t.push_back(p);
  return Vocabulary::from_tokens(t, Level::Phoneme);
}

}  // namespace

TEST_CASE("reserved ids") {
  CHECK(kPad == 0);
  CHECK(kUnk == 1);
  CHECK(kBos == 2);
  CHECK(kEos == 3);
  CHECK(kMask == 4);
  const auto v = Vocabulary::build(std::vector<std::string>{"x"}, Level::Word, 6);
  CHECK(v.size() == 6);
  CHECK(v.token(5) == "x");
  for (int i = 0; i < 5; ++i) CHECK(v.token(i) == Vocabulary::reserved_tokens()[i]);
}

TEST_CASE("build_vocab: frequency then lexicographic order") {
  const auto v = Vocabulary::build(std::vector<std::string>{"a b a"}, Level::Word, 10);
  CHECK(v.size() == 7);
  CHECK(*v.find("a") == 5);
  CHECK(*v.find("b") == 6);

  const auto tie = Vocabulary::build(std::vector<std::string>{"c b a", "b c a"}, Level::Word, 10);
  CHECK(tie.token(5) == "a");
  CHECK(tie.token(6) == "b");
  CHECK(tie.token(7) == "c");

  CHECK_THROWS_AS(Vocabulary::build(std::vector<std::string>{}, Level::Word, 10), InvalidInput);
  CHECK_THROWS_AS(Vocabulary::build(std::vector<std::string>{"a"}, Level::Word, 5), InvalidInput);
}

TEST_CASE("build_vocab agrees with a brute-force frequency count") {
  std::mt19937_64 rng(17);
  // Zipf-ish draw over 40 words so frequencies are distinct-ish with ties.
  std::vector<std::string> words;
  for (int i = 0; i < 40; ++i) words.push_back("w" + std::to_string(i));
  std::vector<double> weights;
  for (int i = 0; i < 40; ++i) weights.push_back(1.0 / (1 + i % 13));
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  std::vector<std::string> corpus;
  for (int s = 0; s < 10; ++s) {
    std::string line;
    for (int w = 0; w < 10; ++w) line += words[pick(rng)] + " ";
    corpus.push_back(line);
  }
  const auto v = Vocabulary::build(corpus, Level::Word, 20);

  std::map<std::string, int> counts;
  for (const auto& line : corpus) {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && line[i] == ' ') ++i;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ') ++j;
      if (j > i) ++counts[line.substr(i, j - i)];
      i = j;
    }
  }
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  REQUIRE(v.size() == 20);
  for (int i = 0; i < 15; ++i) CHECK(v.token(5 + i) == ranked[i].first);

  // Determinism.
  CHECK(Vocabulary::build(corpus, Level::Word, 20).tokens() == v.tokens());
}

TEST_CASE("encode / decode") {
  const auto v = Vocabulary::build(std::vector<std::string>{"a b a"}, Level::Word, 10);
  CHECK(encode("a b", v).ids == std::vector<int>{5, 6});
  CHECK(encode("a z", v).ids == std::vector<int>{5, kUnk});
  CHECK(encode("  a\tb \n", v).ids == std::vector<int>{5, 6});
  CHECK(encode("", v).empty());
  CHECK(encode("a", v).level == Level::Word);
  CHECK_THROWS_AS(decode(TokenSequence{{99}, Level::Word}, v), InvalidInput);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> len(1, 12), tok(5, 6);
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    const int n = len(rng);
    for (int k = 0; k < n; ++k) {
      if (k) s += ' ';
      s += v.token(tok(rng));
    }
    CHECK(decode(encode(s, v), v) == s);
  }
}

TEST_CASE("vocabulary file round trip") {
  const auto v = Vocabulary::build(std::vector<std::string>{"hello world hello"}, Level::Word, 10);
  const auto path = temp_path("vocab.txt");
  v.save(path);
  const auto back = Vocabulary::load(path, Level::Word);
  CHECK(back.tokens() == v.tokens());

  {
    std::ofstream bad(temp_path("bad_vocab.txt"));
    bad << "<unk>\n<pad>\n<s>\n</s>\n<mask>\nx\n";
  }
  CHECK_THROWS_AS(Vocabulary::load(temp_path("bad_vocab.txt"), Level::Word), FormatError);
  {
    std::ofstream dup(temp_path("dup_vocab.txt"));
    dup << "<pad>\n<unk>\n<s>\n</s>\n<mask>\nx\nx\n";
  }
  CHECK_THROWS_AS(Vocabulary::load(temp_path("dup_vocab.txt"), Level::Word), FormatError);
}

TEST_CASE("lexicon normalization and phonemize") {
  const auto ph = phoneme_vocab();
  Lexicon lex;
  CHECK(lex.add("cat", {"K", "AE", "T"}));
  CHECK(lex.add("Dog", {"D", "AO", "G"}));
  CHECK_FALSE(lex.add("cat", {"T"}));  // first entry wins

  CHECK(normalize_word("Cat!") == "cat");
  CHECK(normalize_word("don't") == "don't");
  CHECK(normalize_word("\"(DOG),") == "dog");

  auto ids = [&](std::initializer_list<const char*> syms) {
    std::vector<int> out;
    for (auto s : syms) out.push_back(*ph.find(s));
    return out;
  };
  const std::vector<std::string> one{"cat"};
  CHECK(phonemize(one, lex, ph).ids == ids({"K", "AE", "T"}));
  const std::vector<std::string> two{"cat", "CAT."};
  CHECK(phonemize(two, lex, ph).ids == ids({"K", "AE", "T", "K", "AE", "T"}));
  CHECK(phonemize(std::vector<std::string>{}, lex, ph).empty());
  CHECK(phonemize(one, lex, ph).level == Level::Phoneme);

  const std::vector<std::string> missing{"cat", "bird"};
  try {
    phonemize(missing, lex, ph);
    FAIL("expected MissingPronunciation");
  } catch (const MissingPronunciation& e) {
    CHECK(e.word() == "bird");
  }

  // Word-sequence overload.
  const auto wv = Vocabulary::build(std::vector<std::string>{"cat dog"}, Level::Word, 10);
  const auto seq = encode("dog cat", wv);
  CHECK(phonemize(seq, wv, lex, ph).ids == ids({"D", "AO", "G", "K", "AE", "T"}));
}

TEST_CASE("lexicon file") {
  const auto ph = phoneme_vocab();
  {
    std::ofstream f(temp_path("lex.txt"));
    f << "cat\tK AE T\nCat\tT\ndog\tD AO G\n";
  }
  const auto lex = Lexicon::load(temp_path("lex.txt"), ph);
  CHECK(lex.size() == 2);
  CHECK(*lex.lookup("cat") == std::vector<std::string>{"K", "AE", "T"});
  CHECK(lex.lookup("Cat,") != nullptr);
  CHECK(lex.lookup("bird") == nullptr);

  {
    std::ofstream f(temp_path("lex_bad_symbol.txt"));
    f << "cat\tK AE ZZ\n";
  }
  CHECK_THROWS(Lexicon::load(temp_path("lex_bad_symbol.txt"), ph));
  {
    std::ofstream f(temp_path("lex_no_tab.txt"));
    f << "cat K AE T\n";
  }
  CHECK_THROWS_AS(Lexicon::load(temp_path("lex_no_tab.txt"), ph), FormatError);
}
