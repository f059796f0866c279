// tests/test_eval.cpp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>

#include "biaslattice/eval.hpp"
#include "biaslattice/rng.hpp"

using namespace biaslattice;

namespace {

std::vector<std::string> w(std::initializer_list<const char*> words) {
  return std::vector<std::string>(words.begin(), words.end());
}

// Exhaustive recursive edit distance, no DP table: the independent oracle.
int brute_distance(const std::vector<std::string>& ref, const std::vector<std::string>& hyp, size_t i,
                   size_t j) {
  if (i == ref.size()) return static_cast<int>(hyp.size() - j);
  if (j == hyp.size()) return static_cast<int>(ref.size() - i);
  int best = brute_distance(ref, hyp, i + 1, j + 1) + (ref[i] == hyp[j] ? 0 : 1);
  best = std::min(best, brute_distance(ref, hyp, i + 1, j) + 1);
  best = std::min(best, brute_distance(ref, hyp, i, j + 1) + 1);
  return best;
}

Utterance utt_with_span(const std::string& text, int begin, int end, EntityType type,
                        const std::string& entity) {
  Utterance u;
  u.utt_id = "u";
  u.text = text;
  EntitySpan s;
  s.word_begin = begin;
  s.word_end = end;
  s.type = type;
  s.entity = entity;
  u.spans.push_back(s);
  return u;
}

}  // namespace

TEST_CASE("identical sequences have zero error") {
  WerResult r = wer(w({"turn", "on", "the", "fan"}), w({"turn", "on", "the", "fan"}));
  CHECK(r.wer == 0.0);
  CHECK(r.subs + r.ins + r.dels == 0);
  CHECK(r.alignment.size() == 4);
}

TEST_CASE("single substitution on two words is half") {
  WerResult r = wer(w({"call", "adam"}), w({"call", "addam"}));
  CHECK(r.wer == doctest::Approx(0.5));
  CHECK(r.subs == 1);
  CHECK(r.ins == 0);
  CHECK(r.dels == 0);
}

TEST_CASE("empty reference is rejected") {
  CHECK_THROWS_AS(wer({}, w({"a"})), DataError);
}

TEST_CASE("dp distance equals exhaustive search on short pairs") {
  Rng rng(9);
  const char* words[] = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> ref, hyp;
    size_t rl = 1 + rng.below(6), hl = rng.below(7);
    for (size_t i = 0; i < rl; ++i) ref.push_back(words[rng.below(4)]);
    for (size_t i = 0; i < hl; ++i) hyp.push_back(words[rng.below(4)]);
    WerResult r = wer(ref, hyp);
    CHECK(r.subs + r.ins + r.dels == brute_distance(ref, hyp, 0, 0));
    // The alignment must be consistent with the counted errors.
    int s = 0, d = 0, ins = 0;
    for (const AlignStep& st : r.alignment) {
      s += st.op == EditOp::kSub;
      d += st.op == EditOp::kDel;
      ins += st.op == EditOp::kIns;
    }
    CHECK(s == r.subs);
    CHECK(d == r.dels);
    CHECK(ins == r.ins);
  }
}

TEST_CASE("entity fully correct contributes no errors") {
  Utterance u = utt_with_span("dial zok now", 1, 2, EntityType::kProperName, "zok");
  auto counts = ne_errors(u, w({"dial", "zok", "now"}));
  CHECK(counts.at(EntityType::kProperName).errors == 0);
  CHECK(counts.at(EntityType::kProperName).tokens == 1);
}

TEST_CASE("substituted entity token counts one error over one token") {
  Utterance u = utt_with_span("dial zok now", 1, 2, EntityType::kProperName, "zok");
  auto counts = ne_errors(u, w({"dial", "bop", "now"}));
  CHECK(counts.at(EntityType::kProperName).errors == 1);
  CHECK(counts.at(EntityType::kProperName).tokens == 1);
}

TEST_CASE("insertions attribute to a span only with both neighbors inside") {
  // Two-word span; insertion between the two span words counts.
  Utterance u = utt_with_span("tell zok bip hello", 1, 3, EntityType::kProperName, "zok bip");
  auto inside = ne_errors(u, w({"tell", "zok", "xx", "bip", "hello"}));
  CHECK(inside.at(EntityType::kProperName).errors == 1);
  // Insertion at the span boundary (before the span) does not count.
  auto boundary = ne_errors(u, w({"tell", "xx", "zok", "bip", "hello"}));
  CHECK(boundary.at(EntityType::kProperName).errors == 0);
}

TEST_CASE("constructed edit cases match their planted entity error counts") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    // Unique context words anchor the alignment; the span is two words.
    std::vector<std::string> ref = {"w1", "w2", "e1", "e2", "w3", "w4"};
    Utterance u;
    u.utt_id = "case";
    u.text = "w1 w2 e1 e2 w3 w4";
    EntitySpan s;
    s.word_begin = 2;
    s.word_end = 4;
    s.type = EntityType::kAppliance;
    s.entity = "e1 e2";
    u.spans.push_back(s);

    std::vector<std::string> hyp = ref;
    int expected = 0;
    switch (trial % 4) {
      case 0: {  // substitute k in-span words
        int k = 1 + static_cast<int>(rng.below(2));
        for (int i = 0; i < k; ++i) hyp[2 + static_cast<size_t>(i)] = "sub" + std::to_string(i);
        expected = k;
        break;
      }
      case 1: {  // delete one in-span word
        hyp.erase(hyp.begin() + 2 + static_cast<std::ptrdiff_t>(rng.below(2)));
        expected = 1;
        break;
      }
      case 2: {  // insert inside the span
        hyp.insert(hyp.begin() + 3, "ins");
        expected = 1;
        break;
      }
      case 3: {  // context-only edit
        hyp[0] = "zzz";
        expected = 0;
        break;
      }
    }
    auto counts = ne_errors(u, hyp);
    CHECK(counts.at(EntityType::kAppliance).errors == expected);
    CHECK(counts.at(EntityType::kAppliance).tokens == 2);
  }
}

TEST_CASE("werr closed forms and sign convention") {
  CHECK(werr_value(0.20, 0.15) == doctest::Approx(0.25));
  CHECK(werr_value(0.20, 0.20) == 0.0);
  CHECK(werr_value(0.20, 0.25) == doctest::Approx(-0.25));
  CHECK_THROWS_AS(werr_value(0.0, 0.1), DataError);
}

TEST_CASE("aggregate report and relative reduction") {
  Utterance a = utt_with_span("dial zok now", 1, 2, EntityType::kProperName, "zok");
  Utterance b;
  b.utt_id = "b";
  b.text = "turn the heat down";

  EvalReport base = evaluate({a, b}, {"dial bop now", "turn the heat up"});
  CHECK(base.ref_tokens == 7);
  CHECK(base.wer == doctest::Approx(2.0 / 7));
  CHECK(base.ne_total.errors == 1);
  CHECK(base.ne_total.tokens == 1);

  EvalReport better = evaluate({a, b}, {"dial zok now", "turn the heat up"});
  WerrReport rel = werr(base, better);
  CHECK(rel.werr == doctest::Approx(0.5));
  CHECK(rel.ne_werr == doctest::Approx(1.0));
  CHECK(rel.ne_werr_by_type.at(EntityType::kProperName) == doctest::Approx(1.0));

  EvalReport same = evaluate({a, b}, {"dial bop now", "turn the heat up"});
  CHECK(werr(base, same).werr == 0.0);

  std::string json = base.to_json();
  EvalReport parsed = EvalReport::from_json(json);
  CHECK(parsed.wer == base.wer);
  CHECK(parsed.ne_total.errors == base.ne_total.errors);
  CHECK(parsed.ne_by_type.at(EntityType::kProperName).tokens == 1);
}

TEST_CASE("table renderer aligns columns") {
  std::string table =
      render_table("Results", {"General", "Specific"},
                   {{"Baseline", {"0.00", "0.00"}}, {"Enc-Pred", {"-3.12", "+31.29"}}});
  CHECK(table.find("Results") != std::string::npos);
  CHECK(table.find("Enc-Pred") != std::string::npos);
  CHECK(table.find("+31.29") != std::string::npos);
}
