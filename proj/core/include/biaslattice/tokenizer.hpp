// core/include/biaslattice/tokenizer.hpp
//
// Word-piece vocabulary: greedy frequency BPE over a corpus, greedy
// longest-match encoding. Word-initial pieces carry the "▁" marker.
// Ids 0 and 1 are reserved for blank and unk and are never produced by
// merges or by encoding in-alphabet text.

#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "biaslattice/common.hpp"

namespace biaslattice {

inline constexpr int kBlankId = 0;
inline constexpr int kUnkId = 1;
inline constexpr const char* kWordMarker = "\xE2\x96\x81";  // U+2581

struct EncodeResult {
  std::vector<int> ids;
  bool had_unk = false;
};

class Vocab {
 public:
  Vocab() = default;

  // Greedy BPE: seed with the corpus' base symbols (word-start characters
  // carry the marker), then repeatedly merge the most frequent adjacent
  // pair (ties broken lexicographically on the pair) until target_size is
  // reached or no pair occurs twice.
  static Vocab build(const std::vector<std::string>& corpus, size_t target_size);

  // Greedy longest-match left to right within each word. Characters outside
  // the vocab alphabet produce unk and set had_unk.
  EncodeResult encode(const std::string& text) const;

  // Inverse of encode for well-formed piece sequences. Throws DataError on
  // blank or out-of-range ids.
  std::string decode(const std::vector<int>& ids) const;

  size_t size() const { return pieces_.size(); }
  const std::string& piece(int id) const;
  const std::vector<std::string>& pieces() const { return pieces_; }
  std::optional<int> piece_id(const std::string& piece) const;

  std::string to_json() const;             // JSON array of piece strings
  static Vocab from_json(const std::string& json_text);

 private:
  static Vocab from_pieces(std::vector<std::string> pieces);

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> piece_to_id_;
  size_t max_piece_bytes_ = 0;
};

}  // namespace biaslattice
