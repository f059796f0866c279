// core/src/decode.cpp

#include "biaslattice/decode.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <memory>

namespace biaslattice {

BoostTrie build_boost_trie(const Catalog& catalog, const Vocab& vocab, double lambda) {
  if (lambda < 0) throw DataError("build_boost_trie: lambda must be >= 0");
  BoostTrie trie;
  trie.lambda = lambda;
  trie.nodes.emplace_back();  // root

  for (const CatalogEntry& e : catalog.entities) {
    if (e.entity.empty()) throw DataError("build_boost_trie: empty entity");
    EncodeResult enc = vocab.encode(e.entity);
    if (enc.had_unk || enc.ids.empty())
      throw DataError(strcat_all("build_boost_trie: entity '", e.entity, "' does not tokenize"));
    double arc = lambda / static_cast<double>(enc.ids.size());
    int32_t node = 0;
    for (int id : enc.ids) {
      auto it = trie.nodes[static_cast<size_t>(node)].next.find(id);
      int32_t child;
      if (it == trie.nodes[static_cast<size_t>(node)].next.end()) {
        child = static_cast<int32_t>(trie.nodes.size());
        trie.nodes[static_cast<size_t>(node)].next.emplace(id, child);
        trie.nodes.emplace_back();
        trie.nodes[static_cast<size_t>(child)].arc_weight = arc;
      } else {
        child = it->second;
        // Shared prefix arcs take the largest pushed weight among entities.
        trie.nodes[static_cast<size_t>(child)].arc_weight =
            std::max(trie.nodes[static_cast<size_t>(child)].arc_weight, arc);
      }
      node = child;
    }
    trie.nodes[static_cast<size_t>(node)].is_final = true;
  }
  return trie;
}

SfStepResult sf_step(const BoostTrie& trie, const SfState& state, int token) {
  if (token == kBlankId) throw DataError("sf_step: blank token");
  SfStepResult r;
  r.state = state;

  std::deque<int> queue{token};
  while (!queue.empty()) {
    int tok = queue.front();
    queue.pop_front();
    const BoostTrie::TrieNode& node = trie.nodes[static_cast<size_t>(r.state.node)];
    auto it = node.next.find(tok);
    if (it != node.next.end()) {
      if (r.state.buf.empty()) r.state.buf_from_root = (r.state.node == 0);
      int32_t child = it->second;
      double w = trie.nodes[static_cast<size_t>(child)].arc_weight;
      r.delta += w;
      r.state.pending += w;
      r.state.buf.push_back(tok);
      r.state.node = child;
      if (trie.nodes[static_cast<size_t>(child)].is_final) {
        // Settle the whole match chain to exactly lambda.
        double settle = trie.lambda - (r.state.banked ? trie.lambda : 0.0) - r.state.pending;
        r.delta += settle;
        r.state.pending = 0.0;
        r.state.banked = true;
        r.state.buf.clear();
      }
    } else {
      if (r.state.node == 0 && r.state.buf.empty()) continue;  // no match in progress
      // Revoke partial boost and rescan. If the attempt started at the root
      // its first token was already a failed scan start and is dropped;
      // tokens consumed while continuing past a completed entity are all
      // rescanned (their positions were never tried as starts).
      r.delta -= r.state.pending;
      std::vector<int> replay = r.state.buf;
      if (r.state.buf_from_root && !replay.empty()) replay.erase(replay.begin());
      r.state.node = 0;
      r.state.pending = 0.0;
      r.state.banked = false;
      r.state.buf.clear();
      r.state.buf_from_root = true;
      queue.push_front(tok);
      for (auto rit = replay.rbegin(); rit != replay.rend(); ++rit) queue.push_front(*rit);
    }
  }
  return r;
}

double sf_finalize(const SfState& state) { return -state.pending; }

namespace {

std::vector<double> host_log_softmax(const Tensor& z) {
  std::vector<double> out(z.data.begin(), z.data.end());
  double mx = out[0];
  for (double v : out) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : out) sum += std::exp(v - mx);
  double lse = mx + std::log(sum);
  for (double& v : out) v -= lse;
  return out;
}

}  // namespace

Decoder::Decoder(const TransducerModel& model, const ContextualAdapters* adapters,
                 const Catalog* catalog, const Vocab* vocab, const BoostTrie* trie)
    : model_(model), adapters_(adapters), catalog_(catalog), vocab_(vocab), trie_(trie) {
  if (adapters_ && !vocab_) throw DataError("decoder: adapters require a vocab for the catalog encoder");
}

namespace {

struct UtteranceContext {
  Graph g;
  std::vector<Value> enc_rows;
  std::optional<EncodedCatalog> cat;
  std::optional<PreparedSite> pred_site;
  JointHook joint_hook;

  Value adapt_pred_row(Value p) {
    if (!pred_site) return p;
    return g.add(p, bias_prepared(g, *pred_site, p).bias);
  }

  std::vector<double> cell_log_post(const TransducerModel& m, int64_t t, Value pred_row) {
    Value z = join_cell(g, m, enc_rows[static_cast<size_t>(t)], pred_row,
                        joint_hook ? &joint_hook : nullptr);
    return host_log_softmax(g.value(z));
  }
};

void setup_context(UtteranceContext& ctx, const TransducerModel& model,
                   const ContextualAdapters* adapters, const Catalog* catalog, const Vocab* vocab,
                   const Tensor& features) {
  ctx.enc_rows = encode_audio(ctx.g, model, features);
  if (!adapters) return;

  static const Catalog kEmptyCatalog;
  const Catalog& cat = catalog ? *catalog : kEmptyCatalog;
  ctx.cat = encode_catalog(ctx.g, *adapters, cat, *vocab);

  QueryVariant v = adapters->cfg.variant;
  if (v == QueryVariant::kEncQuery || v == QueryVariant::kEncPredQuery) {
    PreparedSite site = prepare_site(ctx.g, *adapters->enc, *ctx.cat);
    for (Value& e : ctx.enc_rows) e = ctx.g.add(e, bias_prepared(ctx.g, site, e).bias);
  }
  if (v == QueryVariant::kPredQuery || v == QueryVariant::kEncPredQuery) {
    ctx.pred_site = prepare_site(ctx.g, *adapters->pred, *ctx.cat);
  }
  if (v == QueryVariant::kJointQuery) {
    auto site = std::make_shared<PreparedSite>(prepare_site(ctx.g, *adapters->joint, *ctx.cat));
    ctx.joint_hook = [site](Graph& gg, Value j) -> Value {
      return gg.add(j, bias_prepared(gg, *site, j).bias);
    };
  }
}

}  // namespace

std::vector<int> Decoder::greedy(const Tensor& features, const DecodeOptions& opts) {
  UtteranceContext ctx;
  setup_context(ctx, model_, adapters_, catalog_, vocab_, features);

  std::vector<int> out;
  PredState pred = pred_start(ctx.g, model_);
  Value pred_row = ctx.adapt_pred_row(pred.out);
  int emitted = 0;

  for (int64_t t = 0; t < static_cast<int64_t>(ctx.enc_rows.size()); ++t) {
    for (;;) {
      std::vector<double> lp = ctx.cell_log_post(model_, t, pred_row);
      int best = 0;
      for (int k = 1; k < static_cast<int>(lp.size()); ++k)
        if (lp[static_cast<size_t>(k)] > lp[static_cast<size_t>(best)]) best = k;
      if (best == kBlankId || emitted >= opts.max_emissions) break;
      out.push_back(best);
      ++emitted;
      pred = pred_step(ctx.g, model_, pred, best);
      pred_row = ctx.adapt_pred_row(pred.out);
    }
  }
  return out;
}

namespace {

struct BeamHyp {
  std::vector<int> tokens;
  double score = 0.0;
  PredState pred;
  Value pred_row;  // adapted row used by the joint
  SfState sf;
};

double logaddexp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

// Rank ordering: higher score first, ties to the lexicographically smaller
// token sequence (lower token id / shorter prefix first).
bool hyp_before(double score_a, const std::vector<int>& tok_a, double score_b,
                const std::vector<int>& tok_b) {
  if (score_a != score_b) return score_a > score_b;
  return tok_a < tok_b;
}

}  // namespace

Nbest Decoder::beam(const Tensor& features, const DecodeOptions& opts) {
  if (opts.beam < 1) throw DataError("beam_decode: beam must be >= 1");
  UtteranceContext ctx;
  setup_context(ctx, model_, adapters_, catalog_, vocab_, features);
  const bool use_sf = trie_ != nullptr;

  std::vector<BeamHyp> beam_set(1);
  beam_set[0].pred = pred_start(ctx.g, model_);
  beam_set[0].pred_row = ctx.adapt_pred_row(beam_set[0].pred.out);

  const int vocab = static_cast<int>(model_.cfg.vocab_size);

  for (int64_t t = 0; t < static_cast<int64_t>(ctx.enc_rows.size()); ++t) {
    // Hypotheses that took blank at this frame, merged by token sequence.
    std::map<std::vector<int>, BeamHyp> next;
    auto merge_into_next = [&](BeamHyp hyp) {
      auto it = next.find(hyp.tokens);
      if (it == next.end()) {
        next.emplace(hyp.tokens, std::move(hyp));
      } else {
        it->second.score = logaddexp(it->second.score, hyp.score);
      }
    };

    std::vector<BeamHyp> level = beam_set;
    for (int depth = 0; depth <= opts.per_frame_emission_cap; ++depth) {
      struct Candidate {
        size_t parent;
        int token;
        double score;
        double sf_delta;
        SfState sf;
      };
      std::vector<Candidate> candidates;

      for (size_t hi = 0; hi < level.size(); ++hi) {
        BeamHyp& hyp = level[hi];
        std::vector<double> lp = ctx.cell_log_post(model_, t, hyp.pred_row);

        BeamHyp blanked = hyp;
        blanked.score += lp[kBlankId];
        merge_into_next(std::move(blanked));

        if (depth == opts.per_frame_emission_cap) continue;
        for (int k = 1; k < vocab; ++k) {
          Candidate c;
          c.parent = hi;
          c.token = k;
          c.score = hyp.score + lp[static_cast<size_t>(k)];
          if (use_sf) {
            SfStepResult step = sf_step(*trie_, hyp.sf, k);
            c.sf = std::move(step.state);
            c.sf_delta = step.delta;
            c.score += step.delta;
          }
          candidates.push_back(std::move(c));
        }
      }
      if (candidates.empty()) break;

      size_t keep = std::min(static_cast<size_t>(opts.beam), candidates.size());
      std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                        candidates.end(), [&](const Candidate& a, const Candidate& b) {
                          if (a.score != b.score) return a.score > b.score;
                          const std::vector<int>& ta = level[a.parent].tokens;
                          const std::vector<int>& tb = level[b.parent].tokens;
                          if (ta != tb) return ta < tb;
                          return a.token < b.token;
                        });
      candidates.resize(keep);

      std::vector<BeamHyp> children;
      children.reserve(keep);
      for (const Candidate& c : candidates) {
        const BeamHyp& parent = level[c.parent];
        BeamHyp child;
        child.tokens = parent.tokens;
        child.tokens.push_back(c.token);
        child.score = c.score;
        child.pred = pred_step(ctx.g, model_, parent.pred, c.token);
        child.pred_row = ctx.adapt_pred_row(child.pred.out);
        if (use_sf) child.sf = c.sf;
        children.push_back(std::move(child));
      }
      level = std::move(children);
    }

    // Keep the top `beam` merged hypotheses for the next frame.
    std::vector<BeamHyp> merged;
    merged.reserve(next.size());
    for (auto& [tokens, hyp] : next) merged.push_back(std::move(hyp));
    std::sort(merged.begin(), merged.end(), [](const BeamHyp& a, const BeamHyp& b) {
      return hyp_before(a.score, a.tokens, b.score, b.tokens);
    });
    if (merged.size() > static_cast<size_t>(opts.beam)) merged.resize(static_cast<size_t>(opts.beam));
    beam_set = std::move(merged);
  }

  Nbest out;
  for (BeamHyp& hyp : beam_set) {
    Nbest::Hyp h;
    h.tokens = std::move(hyp.tokens);
    h.score = hyp.score + (use_sf ? sf_finalize(hyp.sf) : 0.0);
    out.hyps.push_back(std::move(h));
  }
  std::sort(out.hyps.begin(), out.hyps.end(), [](const Nbest::Hyp& a, const Nbest::Hyp& b) {
    return hyp_before(a.score, a.tokens, b.score, b.tokens);
  });
  return out;
}

std::vector<int> greedy_decode(const TransducerModel& model, const ContextualAdapters* adapters,
                               const Catalog* catalog, const Vocab* vocab, const Tensor& features,
                               const DecodeOptions& opts) {
  Decoder d(model, adapters, catalog, vocab, nullptr);
  return d.greedy(features, opts);
}

Nbest beam_decode(const TransducerModel& model, const ContextualAdapters* adapters,
                  const Catalog* catalog, const Vocab* vocab, const BoostTrie* trie,
                  const Tensor& features, const DecodeOptions& opts) {
  Decoder d(model, adapters, catalog, vocab, trie);
  return d.beam(features, opts);
}

}  // namespace biaslattice
