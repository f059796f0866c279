// core/include/biaslattice/eval.hpp
//
// Word error rate with a full alignment (unit costs, tie preference
// substitution > deletion > insertion), entity-span NE-WER attributed from
// that alignment, and relative reductions (WERR / NE-WERR) against a
// baseline report. Insertions count toward a span only when both alignment
// neighbors fall inside it.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "biaslattice/data.hpp"

namespace biaslattice {

enum class EditOp { kMatch, kSub, kDel, kIns };

struct AlignStep {
  EditOp op;
  int ref_index = -1;  // -1 for insertions
  int hyp_index = -1;  // -1 for deletions
};

struct WerResult {
  double wer = 0.0;
  int subs = 0;
  int ins = 0;
  int dels = 0;
  int ref_len = 0;
  std::vector<AlignStep> alignment;
};

WerResult wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

struct NeCounts {
  int64_t errors = 0;
  int64_t tokens = 0;
  double rate() const { return tokens ? static_cast<double>(errors) / static_cast<double>(tokens) : 0.0; }
};

// Entity errors for one utterance, per type, from the wer alignment.
std::map<EntityType, NeCounts> ne_errors(const Utterance& utt, const std::vector<std::string>& hyp);

struct EvalReport {
  double wer = 0.0;
  int64_t ref_tokens = 0;
  int64_t subs = 0;
  int64_t ins = 0;
  int64_t dels = 0;
  NeCounts ne_total;
  std::map<EntityType, NeCounts> ne_by_type;
  int64_t utterances = 0;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

// Aggregates corpus-level WER and NE-WER over (utterance, hypothesis text).
EvalReport evaluate(const std::vector<Utterance>& refs, const std::vector<std::string>& hyps);

struct WerrReport {
  double werr = 0.0;     // (WER_B - WER_A) / WER_B
  double ne_werr = 0.0;  // same over total NE-WER
  std::map<EntityType, double> ne_werr_by_type;
};

double werr_value(double baseline_wer, double model_wer);
WerrReport werr(const EvalReport& baseline, const EvalReport& model);

// Plain-text table in the shape of the paper's results tables.
std::string render_table(const std::string& title, const std::vector<std::string>& columns,
                         const std::vector<std::pair<std::string, std::vector<std::string>>>& rows);

}  // namespace biaslattice
