// core/include/biaslattice/adapters.hpp
//
// Contextual adapters: a catalog encoder (shared word-piece embedding +
// BiLSTM + projection, optional type embedding) and per-site cross-attention
// biasing adapters. The output projection of every biasing adapter starts at
// zero so an untrained adapter leaves the base model's lattice bit-identical
// (safe start); the base stays frozen while adapters train.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "biaslattice/checkpoint.hpp"
#include "biaslattice/graph.hpp"
#include "biaslattice/lstm.hpp"
#include "biaslattice/tokenizer.hpp"
#include "biaslattice/transducer.hpp"

namespace biaslattice {

enum class EntityType { kProperName = 0, kAppliance = 1, kDeviceLocation = 2 };
inline constexpr int kNumEntityTypes = 3;
// Reserved type id for the <no_bias> row when type embeddings are enabled.
inline constexpr int kNoBiasTypeId = kNumEntityTypes;

const char* entity_type_name(EntityType t);
std::optional<EntityType> entity_type_from_name(const std::string& name);

struct CatalogEntry {
  std::string entity;
  std::optional<EntityType> type;
};

struct Catalog {
  std::vector<CatalogEntry> entities;
  size_t size() const { return entities.size(); }
};

inline constexpr int kMaxCatalogSize = 64;

// JSON-lines catalog file: {"entity": str, "type": optional str} per line.
Catalog read_catalog_jsonl(const std::string& path);
void write_catalog_jsonl(const std::string& path, const Catalog& catalog);

enum class QueryVariant { kEncQuery, kPredQuery, kEncPredQuery, kJointQuery };
const char* query_variant_name(QueryVariant v);
std::optional<QueryVariant> query_variant_from_name(const std::string& name);

struct AdapterConfig {
  int64_t embed_dim = 16;     // catalog word-piece embedding width
  int64_t bilstm_units = 16;  // per direction
  int64_t entity_dim = 16;    // D_e, BiLSTM projection width
  int64_t type_dim = 4;       // D_t, appended when use_types
  bool use_types = true;
  bool use_no_bias = true;
  int64_t attn_dim = 16;      // d
  QueryVariant variant = QueryVariant::kEncPredQuery;
  int64_t site_dim = 32;      // joint_dim of the base model
  int64_t vocab_size = 64;

  int64_t row_dim() const { return entity_dim + (use_types ? type_dim : 0); }  // D
  void validate() const;
  std::string to_json() const;
  static AdapterConfig from_json(const std::string& text);
};

struct BiasingAdapter {
  Tensor wq;     // {site_dim, attn_dim}
  Tensor wk;     // {row_dim, attn_dim}
  Tensor wv;     // {row_dim, attn_dim}
  Tensor w_out;  // {attn_dim, site_dim}, zero-initialized (no bias term)
};

struct ContextualAdapters {
  AdapterConfig cfg;
  Tensor embed;  // {vocab_size, embed_dim}
  LstmParams bilstm_fwd;
  LstmParams bilstm_bwd;
  Tensor catalog_proj_w;  // {2*bilstm_units, entity_dim}
  Tensor catalog_proj_b;  // {entity_dim}
  Tensor no_bias_embed;   // {entity_dim}; typed rows append the reserved type row
  Tensor type_embed;      // {kNumEntityTypes+1, type_dim} when use_types
  // Sites owned by the variant: enc and/or pred, or joint. EncPredQuery owns
  // two independent adapters.
  std::optional<BiasingAdapter> enc;
  std::optional<BiasingAdapter> pred;
  std::optional<BiasingAdapter> joint;

  static ContextualAdapters init(const AdapterConfig& cfg, uint64_t seed);

  NamedTensors named_params();
  NamedTensors named_params() const;
  int64_t param_count() const;
  void set_requires_grad(bool on);
};

// Catalog rows on the tape: K rows in catalog order, then the <no_bias> row
// (when enabled). rows is {K(+1), D}.
struct EncodedCatalog {
  Value rows;
  int64_t count = 0;  // rows including <no_bias>
};

EncodedCatalog encode_catalog(Graph& g, const ContextualAdapters& a, const Catalog& catalog,
                              const Vocab& vocab);

struct BiasResult {
  Value bias;   // {site_dim}
  Value alpha;  // {K(+1)} attention weights
};

// Scaled dot-product attention over the catalog rows:
//   alpha = softmax(Wk C^e . Wq q / sqrt(d)),  b = W_out sum_i alpha_i Wv c^e_i.
BiasResult bias(Graph& g, const BiasingAdapter& ba, Value query, const EncodedCatalog& cat);

// Key/value projections shared across the many queries of one utterance.
struct PreparedSite {
  const BiasingAdapter* ba = nullptr;
  Value keys;    // {K(+1), d}
  Value values;  // {K(+1), d}
};
PreparedSite prepare_site(Graph& g, const BiasingAdapter& ba, const EncodedCatalog& cat);
BiasResult bias_prepared(Graph& g, const PreparedSite& site, Value query);

// Applies the variant's adaptation. Enc/Pred rows are element-wise adapted
// copies; JointQuery installs a per-cell hook instead.
struct AdaptedInputs {
  std::vector<Value> enc_rows;
  std::vector<Value> pred_rows;
  JointHook joint_hook;  // empty unless JointQuery
};

AdaptedInputs adapt(Graph& g, QueryVariant variant, const ContextualAdapters& a,
                    std::span<const Value> enc_rows, std::span<const Value> pred_rows,
                    const EncodedCatalog& cat);

struct ParameterCensus {
  int64_t adapter_params = 0;
  int64_t base_params = 0;
  double fraction = 0.0;  // adapter / (adapter + base)
};
ParameterCensus parameter_census(const ContextualAdapters& a, const TransducerModel& base);

// Checkpoint directory I/O (manifest.json + params.bin, kind "adapters");
// always a separate directory from the base checkpoint.
void save_adapters(const std::string& dir, const ContextualAdapters& adapters);
ContextualAdapters load_adapters(const std::string& dir);

}  // namespace biaslattice
