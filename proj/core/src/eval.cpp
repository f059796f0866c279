// core/src/eval.cpp

#include "biaslattice/eval.hpp"

#include <algorithm>

#include "json.hpp"

namespace biaslattice {

using nlohmann::json;

WerResult wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  if (ref.empty()) throw DataError("wer: empty reference");
  size_t r = ref.size(), h = hyp.size();

  // dp[i][j]: edit distance between ref[0..i) and hyp[0..j).
  std::vector<std::vector<int>> dp(r + 1, std::vector<int>(h + 1, 0));
  for (size_t i = 0; i <= r; ++i) dp[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= h; ++j) dp[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= r; ++i)
    for (size_t j = 1; j <= h; ++j) {
      int sub = dp[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      int del = dp[i - 1][j] + 1;
      int ins = dp[i][j - 1] + 1;
      dp[i][j] = std::min({sub, del, ins});
    }

  WerResult out;
  out.ref_len = static_cast<int>(r);

  // Backtrace, preferring substitution, then deletion, then insertion.
  std::vector<AlignStep> rev;
  size_t i = r, j = h;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        dp[i][j] == dp[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      bool match = ref[i - 1] == hyp[j - 1];
      rev.push_back({match ? EditOp::kMatch : EditOp::kSub, static_cast<int>(i - 1),
                     static_cast<int>(j - 1)});
      if (!match) ++out.subs;
      --i;
      --j;
    } else if (i > 0 && dp[i][j] == dp[i - 1][j] + 1) {
      rev.push_back({EditOp::kDel, static_cast<int>(i - 1), -1});
      ++out.dels;
      --i;
    } else {
      rev.push_back({EditOp::kIns, -1, static_cast<int>(j - 1)});
      ++out.ins;
      --j;
    }
  }
  out.alignment.assign(rev.rbegin(), rev.rend());
  out.wer = static_cast<double>(out.subs + out.ins + out.dels) / static_cast<double>(r);
  return out;
}

std::map<EntityType, NeCounts> ne_errors(const Utterance& utt, const std::vector<std::string>& hyp) {
  std::map<EntityType, NeCounts> out;
  std::vector<std::string> ref = utt.words();
  for (const EntitySpan& s : utt.spans) {
    if (s.word_begin < 0 || s.word_end > static_cast<int>(ref.size()) || s.word_begin >= s.word_end)
      throw DataError(strcat_all("ne_errors: bad span [", s.word_begin, ",", s.word_end, ") in ",
                                 utt.utt_id));
  }
  if (utt.spans.empty()) return out;

  WerResult w = wer(ref, hyp);
  auto in_span = [](const EntitySpan& s, int ref_idx) {
    return ref_idx >= s.word_begin && ref_idx < s.word_end;
  };

  for (const EntitySpan& s : utt.spans) {
    NeCounts& c = out[s.type];
    c.tokens += s.word_end - s.word_begin;
    for (size_t k = 0; k < w.alignment.size(); ++k) {
      const AlignStep& step = w.alignment[k];
      if (step.op == EditOp::kSub || step.op == EditOp::kDel) {
        if (in_span(s, step.ref_index)) ++c.errors;
      } else if (step.op == EditOp::kIns) {
        // Attributed only when both reference neighbors are inside the span.
        int prev_ref = -1, next_ref = -1;
        for (size_t p = k; p-- > 0;)
          if (w.alignment[p].ref_index >= 0) {
            prev_ref = w.alignment[p].ref_index;
            break;
          }
        for (size_t n = k + 1; n < w.alignment.size(); ++n)
          if (w.alignment[n].ref_index >= 0) {
            next_ref = w.alignment[n].ref_index;
            break;
          }
        if (prev_ref >= 0 && next_ref >= 0 && in_span(s, prev_ref) && in_span(s, next_ref)) ++c.errors;
      }
    }
  }
  return out;
}

EvalReport evaluate(const std::vector<Utterance>& refs, const std::vector<std::string>& hyps) {
  if (refs.size() != hyps.size())
    throw DataError(strcat_all("evaluate: ", refs.size(), " refs vs ", hyps.size(), " hyps"));
  EvalReport rep;
  int64_t errors = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    std::vector<std::string> ref = refs[i].words();
    std::vector<std::string> hyp;
    {
      std::string cur;
      for (char c : hyps[i]) {
        if (c == ' ') {
          if (!cur.empty()) hyp.push_back(cur);
          cur.clear();
        } else {
          cur.push_back(c);
        }
      }
      if (!cur.empty()) hyp.push_back(cur);
    }
    WerResult w = wer(ref, hyp);
    errors += w.subs + w.ins + w.dels;
    rep.ref_tokens += w.ref_len;
    rep.subs += w.subs;
    rep.ins += w.ins;
    rep.dels += w.dels;

    for (const auto& [type, counts] : ne_errors(refs[i], hyp)) {
      rep.ne_by_type[type].errors += counts.errors;
      rep.ne_by_type[type].tokens += counts.tokens;
      rep.ne_total.errors += counts.errors;
      rep.ne_total.tokens += counts.tokens;
    }
    ++rep.utterances;
  }
  rep.wer = static_cast<double>(errors) / static_cast<double>(rep.ref_tokens);
  return rep;
}

std::string EvalReport::to_json() const {
  json j;
  j["wer"] = wer;
  j["ref_tokens"] = ref_tokens;
  j["subs"] = subs;
  j["ins"] = ins;
  j["dels"] = dels;
  j["utterances"] = utterances;
  j["ne_total"] = {{"errors", ne_total.errors}, {"tokens", ne_total.tokens}, {"rate", ne_total.rate()}};
  json types = json::object();
  for (const auto& [type, c] : ne_by_type)
    types[entity_type_name(type)] = {{"errors", c.errors}, {"tokens", c.tokens}, {"rate", c.rate()}};
  j["ne_by_type"] = std::move(types);
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  json j = json::parse(text);
  EvalReport r;
  r.wer = j.at("wer").get<double>();
  r.ref_tokens = j.at("ref_tokens").get<int64_t>();
  r.subs = j.at("subs").get<int64_t>();
  r.ins = j.at("ins").get<int64_t>();
  r.dels = j.at("dels").get<int64_t>();
  r.utterances = j.at("utterances").get<int64_t>();
  r.ne_total.errors = j.at("ne_total").at("errors").get<int64_t>();
  r.ne_total.tokens = j.at("ne_total").at("tokens").get<int64_t>();
  for (auto& [key, val] : j.at("ne_by_type").items()) {
    auto t = entity_type_from_name(key);
    if (!t) throw DataError(strcat_all("eval report: unknown type ", key));
    r.ne_by_type[*t] = {val.at("errors").get<int64_t>(), val.at("tokens").get<int64_t>()};
  }
  return r;
}

double werr_value(double baseline_wer, double model_wer) {
  if (baseline_wer <= 0) throw DataError("werr: baseline WER must be > 0");
  return (baseline_wer - model_wer) / baseline_wer;
}

WerrReport werr(const EvalReport& baseline, const EvalReport& model) {
  WerrReport out;
  out.werr = werr_value(baseline.wer, model.wer);
  out.ne_werr = werr_value(baseline.ne_total.rate(), model.ne_total.rate());
  for (const auto& [type, counts] : baseline.ne_by_type) {
    auto it = model.ne_by_type.find(type);
    double model_rate = (it == model.ne_by_type.end()) ? 0.0 : it->second.rate();
    out.ne_werr_by_type[type] = werr_value(counts.rate(), model_rate);
  }
  return out;
}

std::string render_table(const std::string& title, const std::vector<std::string>& columns,
                         const std::vector<std::pair<std::string, std::vector<std::string>>>& rows) {
  size_t label_w = 5;
  for (const auto& [label, cells] : rows) label_w = std::max(label_w, label.size());
  std::vector<size_t> col_w(columns.size());
  for (size_t c = 0; c < columns.size(); ++c) {
    col_w[c] = columns[c].size();
    for (const auto& [label, cells] : rows)
      if (c < cells.size()) col_w[c] = std::max(col_w[c], cells[c].size());
  }

  std::string out = title + "\n";
  auto pad = [](const std::string& s, size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  out += pad("", label_w);
  for (size_t c = 0; c < columns.size(); ++c) out += "  " + pad(columns[c], col_w[c]);
  out += "\n";
  for (const auto& [label, cells] : rows) {
    out += pad(label, label_w);
    for (size_t c = 0; c < columns.size(); ++c)
      out += "  " + pad(c < cells.size() ? cells[c] : "", col_w[c]);
    out += "\n";
  }
  return out;
}

}  // namespace biaslattice
