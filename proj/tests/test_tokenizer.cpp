// tests/test_tokenizer.cpp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "biaslattice/rng.hpp"
#include "biaslattice/tokenizer.hpp"

using namespace biaslattice;

namespace {

const std::string kM = kWordMarker;

Vocab vocab_of(std::vector<std::string> pieces) {
  std::vector<std::string> all = {"<blank>", "<unk>"};
  for (std::string& p : pieces) all.push_back(std::move(p));
  std::string json = "[";
  for (size_t i = 0; i < all.size(); ++i) {
    if (i) json += ",";
    json += "\"" + all[i] + "\"";
  }
  json += "]";
  return Vocab::from_json(json);
}

}  // namespace

TEST_CASE("bpe merges the repeated pair") {
  Vocab v = Vocab::build({"aa aa"}, 5);
  CHECK(v.size() == 5);
  CHECK(v.piece_id(kM + "aa").has_value());
}

TEST_CASE("tight target size yields a character vocab") {
  // Alphabet symbols are marked-a and bare-b; +2 reserved = 4.
  Vocab v = Vocab::build({"ab"}, 4);
  CHECK(v.size() == 4);
  CHECK(v.piece_id(kM + "a").has_value());
  CHECK(v.piece_id("b").has_value());
  CHECK_THROWS_AS(Vocab::build({"ab"}, 3), DataError);
}

TEST_CASE("build is deterministic") {
  std::vector<std::string> corpus = {"the cat sat", "the cat ran", "a cat sat there"};
  Vocab a = Vocab::build(corpus, 24);
  Vocab b = Vocab::build(corpus, 24);
  CHECK(a.pieces() == b.pieces());
}

TEST_CASE("empty corpus is rejected") {
  CHECK_THROWS_AS(Vocab::build({}, 10), DataError);
}

TEST_CASE("greedy longest match") {
  Vocab v = vocab_of({kM + "a", kM + "ab", "b"});
  EncodeResult r = v.encode("ab");
  CHECK(r.ids == std::vector<int>{*v.piece_id(kM + "ab")});
  CHECK_FALSE(r.had_unk);
}

TEST_CASE("fallback composition when no long piece exists") {
  Vocab v = vocab_of({kM + "a", "b"});
  EncodeResult r = v.encode("ab");
  CHECK(r.ids == std::vector<int>{*v.piece_id(kM + "a"), *v.piece_id("b")});
}

TEST_CASE("out-of-alphabet characters produce flagged unk") {
  Vocab v = vocab_of({kM + "a", "a"});
  EncodeResult r = v.encode("aqa");
  CHECK(r.had_unk);
  CHECK(std::count(r.ids.begin(), r.ids.end(), kUnkId) == 1);
}

TEST_CASE("decode renders word markers as spaces") {
  Vocab v = vocab_of({kM + "ab", kM + "a", "b", kM + "c"});
  CHECK(v.decode({*v.piece_id(kM + "ab")}) == "ab");
  CHECK(v.decode({*v.piece_id(kM + "a"), *v.piece_id("b"), *v.piece_id(kM + "c")}) == "ab c");
}

TEST_CASE("decode rejects blank and out-of-range ids") {
  Vocab v = vocab_of({kM + "a"});
  CHECK_THROWS_AS(v.decode({kBlankId}), DataError);
  CHECK_THROWS_AS(v.decode({99}), DataError);
}

TEST_CASE("round trip over random corpus lines") {
  // Random corpus in a small alphabet, vocab built from it, then
  // encode/decode identity over fresh lines from the same alphabet.
  Rng rng(17);
  const std::string alphabet = "abcde";
  auto random_line = [&]() {
    int words = 1 + static_cast<int>(rng.below(4));
    std::string line;
    for (int w = 0; w < words; ++w) {
      if (w) line += ' ';
      int len = 1 + static_cast<int>(rng.below(5));
      for (int i = 0; i < len; ++i) line += alphabet[rng.below(alphabet.size())];
    }
    return line;
  };
  std::vector<std::string> corpus;
  for (int i = 0; i < 60; ++i) corpus.push_back(random_line());
  Vocab v = Vocab::build(corpus, 40);

  for (int i = 0; i < 100; ++i) {
    std::string line = random_line();
    EncodeResult r = v.encode(line);
    CHECK_FALSE(r.had_unk);
    CHECK(v.decode(r.ids) == line);
  }
}

TEST_CASE("no output piece can be extended at its position") {
  Rng rng(23);
  const std::string alphabet = "abc";
  auto random_line = [&]() {
    std::string line;
    int len = 2 + static_cast<int>(rng.below(6));
    for (int i = 0; i < len; ++i) line += alphabet[rng.below(alphabet.size())];
    return line;
  };
  std::vector<std::string> corpus;
  for (int i = 0; i < 40; ++i) corpus.push_back(random_line());
  Vocab v = Vocab::build(corpus, 30);

  for (int i = 0; i < 50; ++i) {
    std::string word = random_line();
    EncodeResult r = v.encode(word);
    REQUIRE_FALSE(r.had_unk);
    // Reconstruct positions and check maximality of each matched piece.
    std::string marked = kM + word;
    size_t pos = 0;
    for (int id : r.ids) {
      const std::string& piece = v.piece(id);
      REQUIRE(marked.compare(pos, piece.size(), piece) == 0);
      for (size_t longer = piece.size() + 1; pos + longer <= marked.size(); ++longer) {
        auto other = v.piece_id(marked.substr(pos, longer));
        CHECK_FALSE(other.has_value());
      }
      pos += piece.size();
    }
    CHECK(pos == marked.size());
  }
}

TEST_CASE("vocab json round trip") {
  Vocab v = Vocab::build({"hello world", "hello there"}, 24);
  Vocab w = Vocab::from_json(v.to_json());
  CHECK(v.pieces() == w.pieces());
  CHECK_THROWS_AS(Vocab::from_json("[\"x\",\"<unk>\"]"), DataError);
}
