// core/src/tokenizer.cpp

#include "biaslattice/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "json.hpp"

namespace biaslattice {

namespace {

// Splits a line into words on single spaces, dropping empties.
std::vector<std::string> split_words(const std::string& line) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : line) {
    if (c == ' ') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

// Base symbol sequence of a word: first char marked, rest bare.
std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> symbols;
  symbols.reserve(word.size());
  for (size_t i = 0; i < word.size(); ++i) {
    std::string s(1, word[i]);
    if (i == 0) s = std::string(kWordMarker) + s;
    symbols.push_back(std::move(s));
  }
  return symbols;
}

}  // namespace

Vocab Vocab::from_pieces(std::vector<std::string> pieces) {
  Vocab v;
  v.pieces_ = std::move(pieces);
  for (size_t i = 0; i < v.pieces_.size(); ++i) {
    v.piece_to_id_.emplace(v.pieces_[i], static_cast<int>(i));
    if (i >= 2) v.max_piece_bytes_ = std::max(v.max_piece_bytes_, v.pieces_[i].size());
  }
  return v;
}

Vocab Vocab::build(const std::vector<std::string>& corpus, size_t target_size) {
  if (corpus.empty()) throw DataError("build_vocab: empty corpus");

  // Work list of words as symbol sequences, with multiplicities.
  std::map<std::vector<std::string>, int64_t> words;
  std::map<std::string, int64_t> base_symbols;  // ordered for determinism
  for (const std::string& line : corpus) {
    for (const std::string& w : split_words(line)) {
      std::vector<std::string> syms = word_symbols(w);
      for (const std::string& s : syms) base_symbols[s]++;
      words[std::move(syms)]++;
    }
  }
  if (words.empty()) throw DataError("build_vocab: corpus contains no words");
  if (target_size < base_symbols.size() + 2)
    throw DataError(strcat_all("build_vocab: target_size ", target_size, " < alphabet ",
                               base_symbols.size(), " + 2 reserved"));

  std::vector<std::string> pieces = {"<blank>", "<unk>"};
  for (const auto& [sym, cnt] : base_symbols) pieces.push_back(sym);

  while (pieces.size() < target_size) {
    std::map<std::pair<std::string, std::string>, int64_t> pair_counts;
    for (const auto& [syms, mult] : words) {
      for (size_t i = 0; i + 1 < syms.size(); ++i)
        pair_counts[{syms[i], syms[i + 1]}] += mult;
    }
    // Most frequent pair, ties to the lexicographically smallest (the map is
    // already ordered, so the first max wins).
    std::pair<std::string, std::string> best;
    int64_t best_count = 0;
    for (const auto& [pr, cnt] : pair_counts) {
      if (cnt > best_count) {
        best_count = cnt;
        best = pr;
      }
    }
    if (best_count < 2) break;  // no pair repeats

    std::string merged = best.first + best.second;
    pieces.push_back(merged);

    std::map<std::vector<std::string>, int64_t> next;
    for (const auto& [syms, mult] : words) {
      std::vector<std::string> out;
      out.reserve(syms.size());
      for (size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
          out.push_back(merged);
          i += 2;
        } else {
          out.push_back(syms[i]);
          ++i;
        }
      }
      next[std::move(out)] += mult;
    }
    words = std::move(next);
  }

  return from_pieces(std::move(pieces));
}

EncodeResult Vocab::encode(const std::string& text) const {
  EncodeResult res;
  for (const std::string& word : split_words(text)) {
    std::string marked = std::string(kWordMarker) + word;
    size_t pos = 0;
    while (pos < marked.size()) {
      // Longest vocab piece matching at pos. The first match must consume
      // the marker, which only occurs piece-initially.
      size_t remaining = marked.size() - pos;
      size_t try_len = std::min(remaining, max_piece_bytes_);
      int found = -1;
      for (size_t len = try_len; len >= 1; --len) {
        auto it = piece_to_id_.find(marked.substr(pos, len));
        if (it != piece_to_id_.end() && it->second >= 2) {
          found = it->second;
          pos += len;
          break;
        }
      }
      if (found < 0) {
        res.ids.push_back(kUnkId);
        res.had_unk = true;
        // Skip the unknown character (plus marker if attached).
        pos += (pos == 0) ? std::string(kWordMarker).size() + 1 : 1;
      } else {
        res.ids.push_back(found);
      }
    }
  }
  return res;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  const std::string marker = kWordMarker;
  for (int id : ids) {
    if (id == kBlankId) throw DataError("decode: blank id in piece sequence");
    if (id < 0 || static_cast<size_t>(id) >= pieces_.size())
      throw DataError(strcat_all("decode: id ", id, " out of range (vocab ", pieces_.size(), ")"));
    const std::string& p = pieces_[static_cast<size_t>(id)];
    if (p.rfind(marker, 0) == 0) {
      if (!out.empty()) out += ' ';
      out += p.substr(marker.size());
    } else {
      out += p;
    }
  }
  return out;
}

const std::string& Vocab::piece(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= pieces_.size())
    throw DataError(strcat_all("piece: id ", id, " out of range"));
  return pieces_[static_cast<size_t>(id)];
}

std::optional<int> Vocab::piece_id(const std::string& piece) const {
  auto it = piece_to_id_.find(piece);
  if (it == piece_to_id_.end()) return std::nullopt;
  return it->second;
}

std::string Vocab::to_json() const {
  nlohmann::json j = pieces_;
  return j.dump();
}

Vocab Vocab::from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  std::vector<std::string> pieces = j.get<std::vector<std::string>>();
  if (pieces.size() < 2 || pieces[0] != "<blank>" || pieces[1] != "<unk>")
    throw DataError("vocab json: reserved ids 0/1 must be <blank>/<unk>");
  return from_pieces(std::move(pieces));
}

}  // namespace biaslattice
