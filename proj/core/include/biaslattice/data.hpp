// core/include/biaslattice/data.hpp
//
// Deterministic synthetic voice-assistant corpus. General utterances come
// from entity-free carrier sentences; specific utterances fill a carrier
// slot with a lexicon entity. Entity words are built exclusively from a
// reserved letter set whose pieces are rare in general text, and their
// audio templates cluster inside a small ball so the pretrained baseline
// genuinely struggles on them - the knob that makes biasing measurable.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "biaslattice/adapters.hpp"
#include "biaslattice/rng.hpp"
#include "biaslattice/tensor.hpp"
#include "biaslattice/tokenizer.hpp"

namespace biaslattice {

struct EntitySpan {
  int word_begin = 0;  // word index in text, inclusive
  int word_end = 0;    // exclusive
  EntityType type = EntityType::kProperName;
  std::string entity;
};

struct Utterance {
  std::string utt_id;
  std::string split;   // "general" | "specific"
  std::string domain;
  std::string text;
  std::vector<int> tokens;
  std::vector<EntitySpan> spans;
  Tensor features;  // {T, feature_dim}

  bool is_specific() const { return !spans.empty(); }
  std::vector<std::string> words() const;
};

struct SynthConfig {
  uint64_t seed = 1;
  int64_t feature_dim = 8;
  int frames_min = 2;
  int frames_max = 4;
  double noise_sigma = 0.1;
  double template_scale = 1.0;
  double rare_ball_sigma = 0.3;  // acoustic spread of entity pieces around a shared center
  bool jitter = true;
  double jitter_prob = 0.3;
  double rare_filler_rate = 0.02;  // general lines with one rare filler word
  size_t vocab_target = 64;
  int lexicon_size = 80;  // per entity type

  int pretrain_count = 360;
  int mixed_general = 100;
  double mix_ratio_m = 1.5;  // specific:general in the mixed set
  int dev_general = 32;
  int dev_specific = 32;
  int test_general = 48;
  int test_specific = 48;

  int mixed_specific() const { return static_cast<int>(mix_ratio_m * mixed_general + 0.5); }
  void validate() const;
  std::string to_json() const;
  static SynthConfig from_json(const std::string& text);
};

using Lexicons = std::map<EntityType, std::vector<std::string>>;

// Fixed per-piece audio templates, drawn once from the corpus seed.
class PieceTemplates {
 public:
  static PieceTemplates build(const Vocab& vocab, const SynthConfig& cfg);
  const std::vector<Tensor>& templates() const { return templates_; }
  bool piece_is_rare(int id) const { return rare_[static_cast<size_t>(id)]; }

 private:
  std::vector<Tensor> templates_;  // per piece id, {L_p, feature_dim}
  std::vector<bool> rare_;
};

// Template concatenation with per-utterance length jitter plus iid Gaussian
// noise; deterministic given (cfg.seed via templates, utt_seed).
Tensor synth_audio(const PieceTemplates& templates, const std::vector<int>& ids,
                   const SynthConfig& cfg, uint64_t utt_seed);

struct Corpus {
  SynthConfig cfg;
  Vocab vocab;
  Lexicons lexicons;
  std::vector<Utterance> pretrain;      // general only
  std::vector<Utterance> mixed;         // adapter training, m:1 specific:general
  std::vector<Utterance> dev;
  std::vector<Utterance> test_general;
  std::vector<Utterance> test_specific;
};

Corpus gen_corpus(const SynthConfig& cfg);

// Per-utterance catalog: all true entities plus distractors sampled without
// replacement from the lexicons, shuffled. Throws if K < true entity count.
Catalog sample_catalog(const Utterance& utt, const Lexicons& lexicons, int k, uint64_t seed);

// Ablation catalog: K distractors, true entities excluded.
Catalog sample_random_catalog(const Utterance& utt, const Lexicons& lexicons, int k, uint64_t seed);

// Directory layout: config.json, vocab.json, lexicons.json, <split>.jsonl.
void save_corpus(const std::string& dir, const Corpus& corpus);
Corpus load_corpus(const std::string& dir);

std::vector<Utterance> read_dataset_jsonl(const std::string& path);
void write_dataset_jsonl(const std::string& path, const std::vector<Utterance>& utts);

}  // namespace biaslattice
