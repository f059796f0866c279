// core/include/biaslattice/experiments.hpp
//
// Decode/eval pipelines over corpus splits with per-utterance catalogs,
// shallow-fusion weight selection on dev, and the catalog-size sweep that
// produces the CSV/SVG artifacts. Shared by the CLI and the acceptance
// suite.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "biaslattice/decode.hpp"
#include "biaslattice/eval.hpp"
#include "biaslattice/train.hpp"

namespace biaslattice {

struct CatalogPolicy {
  enum class Kind {
    kNone,     // decode without any catalog
    kFixed,    // one shared catalog for all utterances
    kSampled,  // per utterance: true entities + distractors
    kRandom,   // per utterance: distractors only (ablation)
  };
  Kind kind = Kind::kNone;
  Catalog fixed;
  int k = 16;           // distractor count for sampled/random
  uint64_t seed = 1;

  static CatalogPolicy none() { return {}; }
  static CatalogPolicy sampled(int k, uint64_t seed);
  static CatalogPolicy random(int k, uint64_t seed);
  static CatalogPolicy fixed_catalog(Catalog c);
};

struct DecodeRun {
  const TransducerModel* model = nullptr;
  const ContextualAdapters* adapters = nullptr;  // optional
  const Vocab* vocab = nullptr;
  const Lexicons* lexicons = nullptr;            // needed for sampled/random policies
  CatalogPolicy catalogs;
  std::optional<double> sf_lambda;               // engaged when set (trie per utterance catalog)
  int beam = 4;
};

struct DecodedUtterance {
  std::string utt_id;
  Nbest nbest;
  std::string top_text;
};

// The catalog for one utterance under the run's policy (sampled/random mix
// the utterance index into the seed).
Catalog catalog_for(const DecodeRun& run, const Utterance& utt, size_t index);

std::vector<DecodedUtterance> decode_set(const DecodeRun& run, const std::vector<Utterance>& set);

EvalReport evaluate_decodes(const std::vector<Utterance>& refs,
                            const std::vector<DecodedUtterance>& decodes);

// n-best JSON lines: {"utt_id", "hyps": [{"text", "score"}]}.
void write_nbest_jsonl(const std::string& path, const std::vector<DecodedUtterance>& decodes,
                       const Vocab& vocab);
std::vector<DecodedUtterance> read_nbest_jsonl(const std::string& path);

// Picks the shallow-fusion weight by decoding `dev_specific` at each lambda
// and keeping the lowest WER (ties to the smaller lambda).
double pick_sf_lambda(const DecodeRun& base_run, const std::vector<Utterance>& dev_specific,
                      const std::vector<double>& lambdas);

struct ExperimentSpec {
  std::string name;
  std::string base_ckpt;
  std::string adapters_ckpt;  // empty = baseline only
  std::vector<int> catalog_sizes = {4, 16, 64};
  std::vector<double> sf_lambdas = {0.5, 1.0, 2.0, 4.0};
  std::string dataset_dir;
  std::string out_dir;
  int beam = 4;
  uint64_t seed = 1;

  static ExperimentSpec from_json_file(const std::string& path);
};

struct SweepPoint {
  int catalog_size = 0;
  double adapter_werr_specific = 0.0;
  double adapter_werr_general = 0.0;
  double sf_werr_specific = 0.0;
  double sf_werr_general = 0.0;
};

struct SweepResult {
  double sf_lambda = 0.0;
  std::vector<SweepPoint> points;
};

// Catalog-size sweep: adapters vs shallow fusion, WERR against the plain
// baseline on specific and general test sets. Writes sweep.csv, sweep.svg
// and tables.txt under spec.out_dir.
SweepResult run_sweep(const ExperimentSpec& spec);

// Minimal SVG line plot; series are (name, y per x).
void write_svg_line_plot(const std::string& path, const std::string& title,
                         const std::vector<double>& xs,
                         const std::vector<std::pair<std::string, std::vector<double>>>& series);

// Every command writes one of these next to its artifacts.
void write_run_manifest(const std::string& dir, const std::string& command,
                        const std::string& config_json, uint64_t seed);

}  // namespace biaslattice
