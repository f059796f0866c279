// core/src/adapters.cpp

#include "biaslattice/adapters.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace biaslattice {

using nlohmann::json;

const char* entity_type_name(EntityType t) {
  switch (t) {
    case EntityType::kProperName: return "ProperName";
    case EntityType::kAppliance: return "Appliance";
    case EntityType::kDeviceLocation: return "DeviceLocation";
  }
  return "?";
}

std::optional<EntityType> entity_type_from_name(const std::string& name) {
  if (name == "ProperName") return EntityType::kProperName;
  if (name == "Appliance") return EntityType::kAppliance;
  if (name == "DeviceLocation") return EntityType::kDeviceLocation;
  return std::nullopt;
}

const char* query_variant_name(QueryVariant v) {
  switch (v) {
    case QueryVariant::kEncQuery: return "enc";
    case QueryVariant::kPredQuery: return "pred";
    case QueryVariant::kEncPredQuery: return "enc-pred";
    case QueryVariant::kJointQuery: return "joint";
  }
  return "?";
}

std::optional<QueryVariant> query_variant_from_name(const std::string& name) {
  if (name == "enc") return QueryVariant::kEncQuery;
  if (name == "pred") return QueryVariant::kPredQuery;
  if (name == "enc-pred") return QueryVariant::kEncPredQuery;
  if (name == "joint") return QueryVariant::kJointQuery;
  return std::nullopt;
}

Catalog read_catalog_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(strcat_all("cannot open catalog ", path));
  Catalog c;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    CatalogEntry e;
    e.entity = j.at("entity").get<std::string>();
    if (j.contains("type") && !j["type"].is_null()) {
      auto t = entity_type_from_name(j["type"].get<std::string>());
      if (!t) throw DataError(strcat_all("catalog ", path, ": unknown entity type ", j["type"].dump()));
      e.type = *t;
    }
    c.entities.push_back(std::move(e));
  }
  return c;
}

void write_catalog_jsonl(const std::string& path, const Catalog& catalog) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(strcat_all("cannot write catalog ", path));
  for (const CatalogEntry& e : catalog.entities) {
    json j;
    j["entity"] = e.entity;
    if (e.type) j["type"] = entity_type_name(*e.type);
    out << j.dump() << "\n";
  }
}

void AdapterConfig::validate() const {
  if (embed_dim < 1 || bilstm_units < 1 || entity_dim < 1 || attn_dim < 1 || site_dim < 1)
    throw DataError("adapter config: all dims must be >= 1");
  if (use_types && type_dim < 1) throw DataError("adapter config: type_dim must be >= 1 when enabled");
  if (vocab_size < 3) throw DataError("adapter config: vocab_size must be >= 3");
}

std::string AdapterConfig::to_json() const {
  json j;
  j["embed_dim"] = embed_dim;
  j["bilstm_units"] = bilstm_units;
  j["entity_dim"] = entity_dim;
  j["type_dim"] = type_dim;
  j["use_types"] = use_types;
  j["use_no_bias"] = use_no_bias;
  j["attn_dim"] = attn_dim;
  j["variant"] = query_variant_name(variant);
  j["site_dim"] = site_dim;
  j["vocab_size"] = vocab_size;
  return j.dump();
}

AdapterConfig AdapterConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  AdapterConfig c;
  c.embed_dim = j.at("embed_dim").get<int64_t>();
  c.bilstm_units = j.at("bilstm_units").get<int64_t>();
  c.entity_dim = j.at("entity_dim").get<int64_t>();
  c.type_dim = j.at("type_dim").get<int64_t>();
  c.use_types = j.at("use_types").get<bool>();
  c.use_no_bias = j.at("use_no_bias").get<bool>();
  c.attn_dim = j.at("attn_dim").get<int64_t>();
  auto v = query_variant_from_name(j.at("variant").get<std::string>());
  if (!v) throw DataError("adapter config: bad variant");
  c.variant = *v;
  c.site_dim = j.at("site_dim").get<int64_t>();
  c.vocab_size = j.at("vocab_size").get<int64_t>();
  c.validate();
  return c;
}

namespace {

BiasingAdapter init_site(const AdapterConfig& cfg, Rng& rng) {
  BiasingAdapter ba;
  ba.wq = uniform_init({cfg.site_dim, cfg.attn_dim}, cfg.site_dim, rng);
  ba.wk = uniform_init({cfg.row_dim(), cfg.attn_dim}, cfg.row_dim(), rng);
  ba.wv = uniform_init({cfg.row_dim(), cfg.attn_dim}, cfg.row_dim(), rng);
  // Zero output projection: adapted model starts exactly at the base model.
  ba.w_out = Tensor::zeros({cfg.attn_dim, cfg.site_dim});
  ba.w_out.requires_grad = true;
  return ba;
}

void collect_site(const std::string& prefix, BiasingAdapter& ba, NamedTensors& out) {
  out.emplace_back(prefix + ".wq", &ba.wq);
  out.emplace_back(prefix + ".wk", &ba.wk);
  out.emplace_back(prefix + ".wv", &ba.wv);
  out.emplace_back(prefix + ".w_out", &ba.w_out);
}

}  // namespace

ContextualAdapters ContextualAdapters::init(const AdapterConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(mix_seed(seed, 0x616461707465ULL));
  ContextualAdapters a;
  a.cfg = cfg;
  a.embed = uniform_init({cfg.vocab_size, cfg.embed_dim}, cfg.embed_dim, rng);
  a.bilstm_fwd = LstmParams::init(cfg.embed_dim, cfg.bilstm_units, rng);
  a.bilstm_bwd = LstmParams::init(cfg.embed_dim, cfg.bilstm_units, rng);
  a.catalog_proj_w = uniform_init({2 * cfg.bilstm_units, cfg.entity_dim}, 2 * cfg.bilstm_units, rng);
  a.catalog_proj_b = Tensor::zeros({cfg.entity_dim});
  a.catalog_proj_b.requires_grad = true;
  if (cfg.use_no_bias) {
    a.no_bias_embed = uniform_init({cfg.entity_dim}, cfg.entity_dim, rng);
  }
  if (cfg.use_types) {
    a.type_embed = uniform_init({kNumEntityTypes + 1, cfg.type_dim}, cfg.type_dim, rng);
  }
  switch (cfg.variant) {
    case QueryVariant::kEncQuery:
      a.enc = init_site(cfg, rng);
      break;
    case QueryVariant::kPredQuery:
      a.pred = init_site(cfg, rng);
      break;
    case QueryVariant::kEncPredQuery:
      a.enc = init_site(cfg, rng);
      a.pred = init_site(cfg, rng);
      break;
    case QueryVariant::kJointQuery:
      a.joint = init_site(cfg, rng);
      break;
  }
  return a;
}

NamedTensors ContextualAdapters::named_params() {
  NamedTensors out;
  out.emplace_back("catalog.embed", &embed);
  bilstm_fwd.collect("catalog.bilstm_fwd", out);
  bilstm_bwd.collect("catalog.bilstm_bwd", out);
  out.emplace_back("catalog.proj_w", &catalog_proj_w);
  out.emplace_back("catalog.proj_b", &catalog_proj_b);
  if (cfg.use_no_bias) out.emplace_back("catalog.no_bias", &no_bias_embed);
  if (cfg.use_types) out.emplace_back("catalog.type_embed", &type_embed);
  if (enc) collect_site("ba_enc", *enc, out);
  if (pred) collect_site("ba_pred", *pred, out);
  if (joint) collect_site("ba_joint", *joint, out);
  return out;
}

NamedTensors ContextualAdapters::named_params() const {
  return const_cast<ContextualAdapters*>(this)->named_params();
}

int64_t ContextualAdapters::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : named_params()) n += t->numel();
  return n;
}

void ContextualAdapters::set_requires_grad(bool on) {
  for (auto& [name, t] : named_params()) t->requires_grad = on;
}

EncodedCatalog encode_catalog(Graph& g, const ContextualAdapters& a, const Catalog& catalog,
                              const Vocab& vocab) {
  if (catalog.size() > kMaxCatalogSize)
    throw DataError(strcat_all("encode_catalog: catalog size ", catalog.size(), " exceeds cap ",
                               kMaxCatalogSize));
  if (!a.cfg.use_no_bias && catalog.entities.empty())
    throw DataError("encode_catalog: empty catalog without <no_bias>");

  Value embed = g.param(a.embed);
  Value proj_w = g.param(a.catalog_proj_w);
  Value proj_b = g.param(a.catalog_proj_b);

  std::vector<Value> rows;
  rows.reserve(catalog.size() + 1);
  for (const CatalogEntry& e : catalog.entities) {
    if (e.entity.empty()) throw DataError("encode_catalog: empty entity string");
    EncodeResult enc = vocab.encode(e.entity);
    if (enc.had_unk || enc.ids.empty())
      throw DataError(strcat_all("encode_catalog: entity '", e.entity, "' does not tokenize cleanly"));

    std::vector<Value> xs;
    xs.reserve(enc.ids.size());
    for (int id : enc.ids) xs.push_back(g.row(embed, id));

    LstmState f = lstm_start(g, a.bilstm_fwd);
    for (Value x : xs) f = lstm_step(g, a.bilstm_fwd, f, x);
    LstmState b = lstm_start(g, a.bilstm_bwd);
    for (size_t i = xs.size(); i > 0; --i) b = lstm_step(g, a.bilstm_bwd, b, xs[i - 1]);

    std::vector<Value> fb = {f.h, b.h};
    Value core = g.add(g.matmul(g.concat(fb), proj_w), proj_b);
    if (a.cfg.use_types) {
      if (!e.type)
        throw DataError(strcat_all("encode_catalog: entity '", e.entity,
                                   "' missing type while type embeddings are enabled"));
      std::vector<Value> parts = {core, g.row(g.param(a.type_embed), static_cast<int>(*e.type))};
      core = g.concat(parts);
    }
    rows.push_back(core);
  }

  if (a.cfg.use_no_bias) {
    Value nb = g.param(a.no_bias_embed);
    if (a.cfg.use_types) {
      std::vector<Value> parts = {nb, g.row(g.param(a.type_embed), kNoBiasTypeId)};
      nb = g.concat(parts);
    }
    rows.push_back(nb);
  }

  EncodedCatalog out;
  out.rows = g.stack_rows(rows);
  out.count = static_cast<int64_t>(rows.size());
  return out;
}

PreparedSite prepare_site(Graph& g, const BiasingAdapter& ba, const EncodedCatalog& cat) {
  PreparedSite s;
  s.ba = &ba;
  s.keys = g.matmul(cat.rows, g.param(ba.wk));
  s.values = g.matmul(cat.rows, g.param(ba.wv));
  return s;
}

BiasResult bias_prepared(Graph& g, const PreparedSite& site, Value query) {
  const BiasingAdapter& ba = *site.ba;
  int64_t d = ba.wq.dim(1);
  Value q = g.matmul(query, g.param(ba.wq));                       // {d}
  Value scores = g.scale(g.matmul(site.keys, q), 1.0 / std::sqrt(static_cast<double>(d)));
  Value alpha = g.softmax(scores, 0);
  Value context = g.matmul(alpha, site.values);                    // {d}
  Value b = g.matmul(context, g.param(ba.w_out));                  // {site_dim}
  return {b, alpha};
}

BiasResult bias(Graph& g, const BiasingAdapter& ba, Value query, const EncodedCatalog& cat) {
  PreparedSite s = prepare_site(g, ba, cat);
  return bias_prepared(g, s, query);
}

AdaptedInputs adapt(Graph& g, QueryVariant variant, const ContextualAdapters& a,
                    std::span<const Value> enc_rows, std::span<const Value> pred_rows,
                    const EncodedCatalog& cat) {
  AdaptedInputs out;
  out.enc_rows.assign(enc_rows.begin(), enc_rows.end());
  out.pred_rows.assign(pred_rows.begin(), pred_rows.end());

  auto adapt_rows = [&](std::vector<Value>& rows, const BiasingAdapter& ba) {
    PreparedSite site = prepare_site(g, ba, cat);
    for (Value& r : rows) r = g.add(r, bias_prepared(g, site, r).bias);
  };

  switch (variant) {
    case QueryVariant::kEncQuery:
      if (!a.enc) throw DataError("adapt: variant enc without an enc adapter");
      adapt_rows(out.enc_rows, *a.enc);
      break;
    case QueryVariant::kPredQuery:
      if (!a.pred) throw DataError("adapt: variant pred without a pred adapter");
      adapt_rows(out.pred_rows, *a.pred);
      break;
    case QueryVariant::kEncPredQuery:
      if (!a.enc || !a.pred) throw DataError("adapt: variant enc-pred needs both adapters");
      adapt_rows(out.enc_rows, *a.enc);
      adapt_rows(out.pred_rows, *a.pred);
      break;
    case QueryVariant::kJointQuery: {
      if (!a.joint) throw DataError("adapt: variant joint without a joint adapter");
      // One attention per (t,u) cell; the hook shares the key/value
      // projections across cells.
      auto site = std::make_shared<PreparedSite>(prepare_site(g, *a.joint, cat));
      out.joint_hook = [site](Graph& gg, Value j) -> Value {
        return gg.add(j, bias_prepared(gg, *site, j).bias);
      };
      break;
    }
  }
  return out;
}

void save_adapters(const std::string& dir, const ContextualAdapters& adapters) {
  save_checkpoint(dir, "adapters", adapters.cfg.to_json(), adapters.named_params());
}

ContextualAdapters load_adapters(const std::string& dir) {
  CheckpointManifest manifest = read_manifest(dir);
  AdapterConfig cfg = AdapterConfig::from_json(manifest.config_json);
  ContextualAdapters a = ContextualAdapters::init(cfg, /*seed=*/0);
  load_checkpoint(dir, "adapters", a.named_params());
  return a;
}

ParameterCensus parameter_census(const ContextualAdapters& a, const TransducerModel& base) {
  ParameterCensus c;
  c.adapter_params = a.param_count();
  c.base_params = base.param_count();
  c.fraction = static_cast<double>(c.adapter_params) /
               static_cast<double>(c.adapter_params + c.base_params);
  return c;
}

}  // namespace biaslattice
