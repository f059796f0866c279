// core/include/biaslattice/decode.hpp
//
// Frame-synchronous greedy and beam decoding over the (optionally adapted)
// transducer, and the shallow-fusion boost trie: word-piece entity paths
// with pushed weights (lambda/L per arc, shared arcs take the max, finals
// settle each completed match to exactly lambda) and subtractive costs that
// revoke partial boost when a match attempt fails.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "biaslattice/adapters.hpp"
#include "biaslattice/tokenizer.hpp"
#include "biaslattice/transducer.hpp"

namespace biaslattice {

struct BoostTrie {
  struct TrieNode {
    std::map<int, int32_t> next;  // token -> node id
    double arc_weight = 0.0;      // weight of the incoming arc
    bool is_final = false;
  };
  std::vector<TrieNode> nodes;  // node 0 is the root
  double lambda = 0.0;

  bool empty() const { return nodes.size() <= 1; }
};

BoostTrie build_boost_trie(const Catalog& catalog, const Vocab& vocab, double lambda);

// Matching state carried per hypothesis. `pending` is revocable boost since
// the last completed entity (or match start); `banked` records whether the
// current chain already completed an entity; `buf` holds the tokens consumed
// since then so a failed attempt can be rescanned from its second token.
struct SfState {
  int32_t node = 0;
  double pending = 0.0;
  bool banked = false;
  std::vector<int> buf;
  bool buf_from_root = true;  // buf[0] was consumed at the root (a scan start)

  bool operator==(const SfState&) const = default;
};

struct SfStepResult {
  SfState state;
  double delta = 0.0;
};

SfStepResult sf_step(const BoostTrie& trie, const SfState& state, int token);
// Score adjustment when a hypothesis is finalized mid-match: revokes pending.
double sf_finalize(const SfState& state);

struct DecodeOptions {
  int beam = 4;
  double sf_lambda = 0.0;
  int max_emissions = 200;       // greedy total-emission guard
  int per_frame_emission_cap = 10;
};

struct Nbest {
  struct Hyp {
    std::vector<int> tokens;
    double score = 0.0;
  };
  std::vector<Hyp> hyps;
};

// Decoder over one utterance. Builds one tape for the utterance; the catalog
// is encoded once and shared across hypotheses.
class Decoder {
 public:
  Decoder(const TransducerModel& model, const ContextualAdapters* adapters, const Catalog* catalog,
          const Vocab* vocab, const BoostTrie* trie);

  std::vector<int> greedy(const Tensor& features, const DecodeOptions& opts = {});
  Nbest beam(const Tensor& features, const DecodeOptions& opts = {});

 private:
  const TransducerModel& model_;
  const ContextualAdapters* adapters_;
  const Catalog* catalog_;
  const Vocab* vocab_;
  const BoostTrie* trie_;
};

std::vector<int> greedy_decode(const TransducerModel& model, const ContextualAdapters* adapters,
                               const Catalog* catalog, const Vocab* vocab, const Tensor& features,
                               const DecodeOptions& opts = {});

Nbest beam_decode(const TransducerModel& model, const ContextualAdapters* adapters,
                  const Catalog* catalog, const Vocab* vocab, const BoostTrie* trie,
                  const Tensor& features, const DecodeOptions& opts = {});

}  // namespace biaslattice
