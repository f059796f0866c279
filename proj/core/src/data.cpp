// core/src/data.cpp

#include "biaslattice/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "biaslattice/checkpoint.hpp"
#include "json.hpp"

namespace biaslattice {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// General carriers use only these letters; entity and filler words use only
// the reserved rare letters, so entity pieces cannot occur in general words.
constexpr const char* kRareLetters = "bgkpvz";

bool is_rare_word(const std::string& w) {
  for (char c : w)
    if (std::string(kRareLetters).find(c) == std::string::npos) return false;
  return true;
}

bool contains_rare_letter(const std::string& w) {
  for (char c : w)
    if (std::string(kRareLetters).find(c) != std::string::npos) return true;
  return false;
}

// Entity-free carrier sentences per domain.
const std::vector<std::pair<const char*, const char*>> kGeneralTemplates = {
    {"weather", "tell me the weather"},
    {"weather", "will it rain later"},
    {"weather", "is it sunny out there"},
    {"weather", "how warm is it now"},
    {"weather", "what is the weather today"},
    {"music", "resume the tunes"},
    {"music", "listen to a tune"},
    {"music", "turn the sound down"},
    {"music", "another tune now"},
    {"music", "halt the tunes"},
    {"smarthome", "turn the heat down"},
    {"smarthome", "set a timer now"},
    {"smarthome", "start the fan"},
    {"smarthome", "shut all the doors"},
    {"smarthome", "warm the house a little"},
    {"communications", "read me the mail"},
    {"communications", "who tried to reach me"},
    {"communications", "send a short note"},
    {"communications", "read the last note aloud"},
    {"communications", "any new mail today"},
};

// Carriers with one entity slot, by entity type.
const std::vector<const char*> kProperNameTemplates = {
    "dial <e> now", "tell <e> hello", "remind <e> today", "answer <e> soon", "mail <e> the list",
};
const std::vector<const char*> kApplianceTemplates = {
    "turn on the <e>", "start the <e> now", "shut the <e> down", "is the <e> still on",
};
const std::vector<const char*> kLocationTemplates = {
    "dim the <e> now", "warm the <e> a little", "is the <e> door shut", "set a timer in the <e>",
};

const std::vector<const char*>& templates_for(EntityType t) {
  switch (t) {
    case EntityType::kProperName: return kProperNameTemplates;
    case EntityType::kAppliance: return kApplianceTemplates;
    case EntityType::kDeviceLocation: return kLocationTemplates;
  }
  throw DataError("bad entity type");
}

std::vector<std::string> split_on_space(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string rare_word(Rng& rng, int min_len, int max_len) {
  int len = min_len + static_cast<int>(rng.below(static_cast<uint64_t>(max_len - min_len + 1)));
  std::string w;
  for (int i = 0; i < len; ++i) w.push_back(kRareLetters[rng.below(6)]);
  return w;
}

std::vector<std::string> make_word_pool(Rng& rng, int count, std::set<std::string>& taken) {
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < count) {
    std::string w = rare_word(rng, 3, 5);
    if (taken.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

std::vector<std::string> Utterance::words() const { return split_on_space(text); }

void SynthConfig::validate() const {
  if (noise_sigma < 0) throw DataError("synth config: noise_sigma must be >= 0");
  if (frames_min < 1 || frames_max < frames_min) throw DataError("synth config: bad frames range");
  if (feature_dim < 1) throw DataError("synth config: feature_dim must be >= 1");
  if (mix_ratio_m <= 0) throw DataError("synth config: mix ratio must be > 0");
  if (pretrain_count < 1 || mixed_general < 1 || dev_general < 1 || dev_specific < 1 ||
      test_general < 1 || test_specific < 1)
    throw DataError("synth config: all split counts must be >= 1");
  if (lexicon_size < 1) throw DataError("synth config: lexicon_size must be >= 1");
}

std::string SynthConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["feature_dim"] = feature_dim;
  j["frames_min"] = frames_min;
  j["frames_max"] = frames_max;
  j["noise_sigma"] = noise_sigma;
  j["template_scale"] = template_scale;
  j["rare_ball_sigma"] = rare_ball_sigma;
  j["jitter"] = jitter;
  j["jitter_prob"] = jitter_prob;
  j["rare_filler_rate"] = rare_filler_rate;
  j["vocab_target"] = vocab_target;
  j["lexicon_size"] = lexicon_size;
  j["pretrain_count"] = pretrain_count;
  j["mixed_general"] = mixed_general;
  j["mix_ratio_m"] = mix_ratio_m;
  j["dev_general"] = dev_general;
  j["dev_specific"] = dev_specific;
  j["test_general"] = test_general;
  j["test_specific"] = test_specific;
  return j.dump();
}

SynthConfig SynthConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  SynthConfig c;
  c.seed = j.value("seed", c.seed);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.frames_min = j.value("frames_min", c.frames_min);
  c.frames_max = j.value("frames_max", c.frames_max);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.template_scale = j.value("template_scale", c.template_scale);
  c.rare_ball_sigma = j.value("rare_ball_sigma", c.rare_ball_sigma);
  c.jitter = j.value("jitter", c.jitter);
  c.jitter_prob = j.value("jitter_prob", c.jitter_prob);
  c.rare_filler_rate = j.value("rare_filler_rate", c.rare_filler_rate);
  c.vocab_target = j.value("vocab_target", c.vocab_target);
  c.lexicon_size = j.value("lexicon_size", c.lexicon_size);
  c.pretrain_count = j.value("pretrain_count", c.pretrain_count);
  c.mixed_general = j.value("mixed_general", c.mixed_general);
  c.mix_ratio_m = j.value("mix_ratio_m", c.mix_ratio_m);
  c.dev_general = j.value("dev_general", c.dev_general);
  c.dev_specific = j.value("dev_specific", c.dev_specific);
  c.test_general = j.value("test_general", c.test_general);
  c.test_specific = j.value("test_specific", c.test_specific);
  c.validate();
  return c;
}

PieceTemplates PieceTemplates::build(const Vocab& vocab, const SynthConfig& cfg) {
  PieceTemplates pt;
  pt.templates_.resize(vocab.size());
  pt.rare_.resize(vocab.size(), false);

  // All rare pieces share one center trajectory; each piece sits a small
  // offset away from it, which is what makes entities acoustically
  // confusable with each other but not with general speech.
  Rng center_rng(mix_seed(cfg.seed, 0x63656e746572ULL));
  std::vector<std::vector<double>> center(static_cast<size_t>(cfg.frames_max));
  for (auto& frame : center) {
    frame.resize(static_cast<size_t>(cfg.feature_dim));
    for (double& v : frame) v = cfg.template_scale * center_rng.normal();
  }

  const std::string marker = kWordMarker;
  for (size_t id = 0; id < vocab.size(); ++id) {
    if (id == kBlankId || id == kUnkId) {
      pt.templates_[id] = Tensor({1, cfg.feature_dim});
      continue;
    }
    std::string text = vocab.piece(static_cast<int>(id));
    if (text.rfind(marker, 0) == 0) text = text.substr(marker.size());
    bool rare = contains_rare_letter(text);
    pt.rare_[id] = rare;

    Rng rng(mix_seed(cfg.seed, 0x74656d706cULL, static_cast<uint64_t>(id)));
    int len = cfg.frames_min +
              static_cast<int>(rng.below(static_cast<uint64_t>(cfg.frames_max - cfg.frames_min + 1)));
    Tensor t({len, cfg.feature_dim});
    for (int64_t f = 0; f < len; ++f)
      for (int64_t d = 0; d < cfg.feature_dim; ++d) {
        if (rare) {
          t(f, d) = center[static_cast<size_t>(f)][static_cast<size_t>(d)] +
                    cfg.rare_ball_sigma * rng.normal();
        } else {
          t(f, d) = cfg.template_scale * rng.normal();
        }
      }
    pt.templates_[id] = std::move(t);
  }
  return pt;
}

Tensor synth_audio(const PieceTemplates& templates, const std::vector<int>& ids,
                   const SynthConfig& cfg, uint64_t utt_seed) {
  if (ids.empty()) throw DataError("synth_audio: empty piece sequence");
  Rng rng(mix_seed(utt_seed, 0x617564696fULL));

  std::vector<const Tensor*> parts;
  std::vector<bool> dup;
  int64_t total = 0;
  for (int id : ids) {
    if (id < 0 || static_cast<size_t>(id) >= templates.templates().size())
      throw DataError(strcat_all("synth_audio: piece id ", id, " out of range"));
    const Tensor& t = templates.templates()[static_cast<size_t>(id)];
    bool d = cfg.jitter && rng.uniform() < cfg.jitter_prob;
    parts.push_back(&t);
    dup.push_back(d);
    total += t.dim(0) + (d ? 1 : 0);
  }

  Tensor out({total, cfg.feature_dim});
  int64_t row = 0;
  for (size_t i = 0; i < parts.size(); ++i) {
    const Tensor& t = *parts[i];
    for (int64_t f = 0; f < t.dim(0); ++f, ++row)
      for (int64_t d = 0; d < cfg.feature_dim; ++d) out(row, d) = t(f, d);
    if (dup[i]) {
      for (int64_t d = 0; d < cfg.feature_dim; ++d) out(row, d) = t(t.dim(0) - 1, d);
      ++row;
    }
  }
  if (cfg.noise_sigma > 0)
    for (double& v : out.data) v += cfg.noise_sigma * rng.normal();
  return out;
}

namespace {

// Text and span layout of an utterance, before tokenization and synthesis.
struct DraftUtterance {
  std::string utt_id;
  std::string split;
  std::string domain;
  std::string text;
  std::vector<EntitySpan> spans;
};

DraftUtterance draft_general(const std::string& id, Rng& rng, bool with_filler,
                             const std::vector<std::string>& fillers) {
  DraftUtterance u;
  u.utt_id = id;
  u.split = "general";
  size_t pick = rng.below(kGeneralTemplates.size());
  u.domain = kGeneralTemplates[pick].first;
  u.text = kGeneralTemplates[pick].second;
  if (with_filler) {
    // One rare filler word keeps entity-letter pieces alive in pretraining
    // without ever showing an actual lexicon entity.
    u.text += " " + fillers[rng.below(fillers.size())];
  }
  return u;
}

DraftUtterance draft_specific(const std::string& id, Rng& rng, const Lexicons& lexicons) {
  DraftUtterance u;
  u.utt_id = id;
  u.split = "specific";
  EntityType type = static_cast<EntityType>(rng.below(kNumEntityTypes));
  u.domain = (type == EntityType::kProperName) ? "communications" : "smarthome";
  const auto& tmpls = templates_for(type);
  std::string carrier = tmpls[rng.below(tmpls.size())];
  const std::vector<std::string>& lex = lexicons.at(type);
  std::string entity = lex[rng.below(lex.size())];

  std::vector<std::string> words = split_on_space(carrier);
  EntitySpan span;
  span.type = type;
  span.entity = entity;
  for (size_t i = 0; i < words.size(); ++i) {
    if (words[i] == "<e>") {
      words[i] = entity;
      span.word_begin = static_cast<int>(i);
      span.word_end = static_cast<int>(i) + 1;
    }
  }
  std::string text;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) text += ' ';
    text += words[i];
  }
  u.text = std::move(text);
  u.spans.push_back(std::move(span));
  return u;
}

std::string zero_pad(int n, int width) {
  std::string s = std::to_string(n);
  while (static_cast<int>(s.size()) < width) s = "0" + s;
  return s;
}

}  // namespace

Corpus gen_corpus(const SynthConfig& cfg) {
  cfg.validate();
  Corpus corpus;
  corpus.cfg = cfg;

  // Lexicons and fillers: disjoint pools of rare-letter words.
  std::set<std::string> taken;
  Rng lex_rng(mix_seed(cfg.seed, 0x6c6578ULL));
  corpus.lexicons[EntityType::kProperName] = make_word_pool(lex_rng, cfg.lexicon_size, taken);
  corpus.lexicons[EntityType::kAppliance] = make_word_pool(lex_rng, cfg.lexicon_size, taken);
  corpus.lexicons[EntityType::kDeviceLocation] = make_word_pool(lex_rng, cfg.lexicon_size, taken);
  std::vector<std::string> fillers = make_word_pool(lex_rng, 30, taken);

  // Carrier sanity: general carriers must not contain rare letters, and no
  // filler or entity may collide with a carrier word.
  std::set<std::string> carrier_words;
  for (const auto& [domain, text] : kGeneralTemplates)
    for (const std::string& w : split_on_space(text)) {
      if (contains_rare_letter(w))
        throw DataError(strcat_all("gen_corpus: general template word '", w, "' uses rare letters"));
      carrier_words.insert(w);
    }
  for (const std::string& w : taken)
    if (carrier_words.count(w))
      throw DataError(strcat_all("gen_corpus: lexicon/template conflict on '", w, "'"));

  // Phase 1: texts and spans for every split.
  struct SplitDraft {
    const char* prefix;
    uint64_t tag;
    int n_general;
    int n_specific;
    std::vector<DraftUtterance> drafts;
    std::vector<Utterance>* out;
  };
  std::vector<SplitDraft> splits = {
      {"p", 0x70726574ULL, cfg.pretrain_count, 0, {}, &corpus.pretrain},
      {"m", 0x6d697865ULL, cfg.mixed_general, cfg.mixed_specific(), {}, &corpus.mixed},
      {"d", 0x646576ULL, cfg.dev_general, cfg.dev_specific, {}, &corpus.dev},
      {"tg", 0x7467ULL, cfg.test_general, 0, {}, &corpus.test_general},
      {"ts", 0x7473ULL, 0, cfg.test_specific, {}, &corpus.test_specific},
  };
  // Rare fillers go on a fixed schedule (one per 1/rate general lines) so
  // the sub-1% rarity bound holds deterministically at any corpus size.
  int filler_period =
      cfg.rare_filler_rate > 0 ? static_cast<int>(1.0 / cfg.rare_filler_rate + 0.5) : 0;
  for (SplitDraft& s : splits) {
    Rng rng(mix_seed(cfg.seed, s.tag));
    int idx = 0;
    for (int i = 0; i < s.n_general; ++i, ++idx) {
      bool with_filler = filler_period > 0 && ((i + 1) % filler_period) == 0;
      s.drafts.push_back(
          draft_general(strcat_all(s.prefix, zero_pad(idx, 5)), rng, with_filler, fillers));
    }
    for (int i = 0; i < s.n_specific; ++i, ++idx)
      s.drafts.push_back(draft_specific(strcat_all(s.prefix, zero_pad(idx, 5)), rng, corpus.lexicons));
    Rng shuffle_rng(mix_seed(cfg.seed, s.tag, 0x73687566ULL));
    shuffle_rng.shuffle(s.drafts);
  }

  // Phase 2: the word-piece vocab is trained on the pretraining text
  // distribution plus one copy of every carrier and of the entity inventory
  // (so every sentence and entity tokenizes), mirroring a production
  // tokenizer that covers the language.
  std::vector<std::string> vocab_corpus;
  for (const DraftUtterance& d : splits[0].drafts) vocab_corpus.push_back(d.text);
  for (const auto& [domain, text] : kGeneralTemplates) vocab_corpus.push_back(text);
  for (EntityType t : {EntityType::kProperName, EntityType::kAppliance, EntityType::kDeviceLocation})
    for (const char* tmpl : templates_for(t)) {
      std::string s;
      for (const std::string& w : split_on_space(tmpl))
        if (w != "<e>") s += (s.empty() ? "" : " ") + w;
      vocab_corpus.push_back(s);
    }
  for (const auto& [type, words] : corpus.lexicons)
    for (const std::string& w : words) vocab_corpus.push_back(w);
  for (const std::string& w : fillers) vocab_corpus.push_back(w);

  corpus.vocab = Vocab::build(vocab_corpus, cfg.vocab_target);
  PieceTemplates templates = PieceTemplates::build(corpus.vocab, cfg);

  // Phase 3: tokenize and synthesize.
  for (SplitDraft& s : splits) {
    s.out->reserve(s.drafts.size());
    for (size_t i = 0; i < s.drafts.size(); ++i) {
      DraftUtterance& d = s.drafts[i];
      Utterance u;
      u.utt_id = std::move(d.utt_id);
      u.split = std::move(d.split);
      u.domain = std::move(d.domain);
      u.text = std::move(d.text);
      u.spans = std::move(d.spans);
      EncodeResult enc = corpus.vocab.encode(u.text);
      if (enc.had_unk) throw DataError(strcat_all("gen_corpus: unk while encoding '", u.text, "'"));
      u.tokens = std::move(enc.ids);
      u.features =
          synth_audio(templates, u.tokens, cfg, mix_seed(cfg.seed, s.tag, static_cast<uint64_t>(i)));
      s.out->push_back(std::move(u));
    }
  }

  // Engineered rarity: rare pieces must stay under 1% of pretrain tokens.
  int64_t rare_tokens = 0, total_tokens = 0;
  for (const Utterance& u : corpus.pretrain)
    for (int id : u.tokens) {
      ++total_tokens;
      if (templates.piece_is_rare(id)) ++rare_tokens;
    }
  double rate = static_cast<double>(rare_tokens) / static_cast<double>(total_tokens);
  if (rate >= 0.01)
    throw DataError(strcat_all("gen_corpus: rare-piece rate ", rate, " >= 1% of pretrain tokens"));

  return corpus;
}

namespace {

std::vector<std::pair<std::string, EntityType>> true_entities(const Utterance& utt) {
  std::vector<std::pair<std::string, EntityType>> out;
  for (const EntitySpan& s : utt.spans) {
    std::pair<std::string, EntityType> e{s.entity, s.type};
    if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(std::move(e));
  }
  return out;
}

Catalog fill_catalog(const std::vector<std::pair<std::string, EntityType>>& pinned,
                     const std::set<std::string>& exclude, const Lexicons& lexicons, int k,
                     uint64_t seed) {
  Catalog cat;
  for (const auto& [entity, type] : pinned) cat.entities.push_back({entity, type});

  std::vector<std::pair<std::string, EntityType>> pool;
  for (const auto& [type, words] : lexicons)
    for (const std::string& w : words)
      if (!exclude.count(w)) pool.emplace_back(w, type);

  Rng rng(mix_seed(seed, 0x636174ULL));
  rng.shuffle(pool);
  for (const auto& [entity, type] : pool) {
    if (static_cast<int>(cat.entities.size()) >= k) break;
    cat.entities.push_back({entity, type});
  }
  rng.shuffle(cat.entities);
  return cat;
}

}  // namespace

Catalog sample_catalog(const Utterance& utt, const Lexicons& lexicons, int k, uint64_t seed) {
  if (k < 1) throw DataError("sample_catalog: K must be >= 1");
  auto pinned = true_entities(utt);
  if (static_cast<int>(pinned.size()) > k)
    throw DataError(strcat_all("sample_catalog: K=", k, " below true entity count ", pinned.size()));
  std::set<std::string> exclude;
  for (const auto& [entity, type] : pinned) exclude.insert(entity);
  return fill_catalog(pinned, exclude, lexicons, k, seed);
}

Catalog sample_random_catalog(const Utterance& utt, const Lexicons& lexicons, int k, uint64_t seed) {
  if (k < 1) throw DataError("sample_random_catalog: K must be >= 1");
  std::set<std::string> exclude;
  for (const EntitySpan& s : utt.spans) exclude.insert(s.entity);
  return fill_catalog({}, exclude, lexicons, k, seed);
}

namespace {

json utterance_to_json(const Utterance& u) {
  json j;
  j["utt_id"] = u.utt_id;
  j["split"] = u.split;
  j["domain"] = u.domain;
  j["text"] = u.text;
  j["tokens"] = u.tokens;
  json spans = json::array();
  for (const EntitySpan& s : u.spans) {
    json js;
    js["begin"] = s.word_begin;
    js["end"] = s.word_end;
    js["type"] = entity_type_name(s.type);
    js["entity"] = s.entity;
    spans.push_back(std::move(js));
  }
  j["spans"] = std::move(spans);
  j["frames"] = u.features.dim(0);
  j["feature_dim"] = u.features.dim(1);
  std::vector<uint8_t> bytes(u.features.data.size() * 8);
  doubles_to_bytes(u.features.data.data(), u.features.data.size(), bytes.data());
  j["features"] = base64_encode(bytes.data(), bytes.size());
  return j;
}

Utterance utterance_from_json(const json& j) {
  Utterance u;
  u.utt_id = j.at("utt_id").get<std::string>();
  u.split = j.at("split").get<std::string>();
  u.domain = j.at("domain").get<std::string>();
  u.text = j.at("text").get<std::string>();
  u.tokens = j.at("tokens").get<std::vector<int>>();
  for (const json& js : j.at("spans")) {
    EntitySpan s;
    s.word_begin = js.at("begin").get<int>();
    s.word_end = js.at("end").get<int>();
    auto t = entity_type_from_name(js.at("type").get<std::string>());
    if (!t) throw DataError("dataset: unknown span type");
    s.type = *t;
    s.entity = js.at("entity").get<std::string>();
    u.spans.push_back(std::move(s));
  }
  int64_t frames = j.at("frames").get<int64_t>();
  int64_t dim = j.at("feature_dim").get<int64_t>();
  std::vector<uint8_t> bytes = base64_decode(j.at("features").get<std::string>());
  if (bytes.size() != static_cast<size_t>(frames * dim * 8))
    throw DataError(strcat_all("dataset: feature blob size mismatch for ", u.utt_id));
  u.features = Tensor({frames, dim});
  bytes_to_doubles(bytes.data(), u.features.data.size(), u.features.data.data());
  return u;
}

}  // namespace

void write_dataset_jsonl(const std::string& path, const std::vector<Utterance>& utts) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(strcat_all("cannot write dataset ", path));
  for (const Utterance& u : utts) out << utterance_to_json(u).dump() << "\n";
}

std::vector<Utterance> read_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(strcat_all("cannot open dataset ", path));
  std::vector<Utterance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(utterance_from_json(json::parse(line)));
  }
  return out;
}

void save_corpus(const std::string& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  {
    std::ofstream f(fs::path(dir) / "config.json", std::ios::trunc);
    f << corpus.cfg.to_json() << "\n";
  }
  {
    std::ofstream f(fs::path(dir) / "vocab.json", std::ios::trunc);
    f << corpus.vocab.to_json() << "\n";
  }
  {
    json j;
    for (const auto& [type, words] : corpus.lexicons) j[entity_type_name(type)] = words;
    std::ofstream f(fs::path(dir) / "lexicons.json", std::ios::trunc);
    f << j.dump(2) << "\n";
  }
  write_dataset_jsonl((fs::path(dir) / "pretrain.jsonl").string(), corpus.pretrain);
  write_dataset_jsonl((fs::path(dir) / "mixed.jsonl").string(), corpus.mixed);
  write_dataset_jsonl((fs::path(dir) / "dev.jsonl").string(), corpus.dev);
  write_dataset_jsonl((fs::path(dir) / "test_general.jsonl").string(), corpus.test_general);
  write_dataset_jsonl((fs::path(dir) / "test_specific.jsonl").string(), corpus.test_specific);
}

Corpus load_corpus(const std::string& dir) {
  Corpus corpus;
  auto slurp = [&](const char* name) {
    std::ifstream f(fs::path(dir) / name);
    if (!f) throw DataError(strcat_all("missing ", dir, "/", name));
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  };
  corpus.cfg = SynthConfig::from_json(slurp("config.json"));
  corpus.vocab = Vocab::from_json(slurp("vocab.json"));
  json lex = json::parse(slurp("lexicons.json"));
  for (auto& [key, words] : lex.items()) {
    auto t = entity_type_from_name(key);
    if (!t) throw DataError(strcat_all("lexicons.json: unknown type ", key));
    corpus.lexicons[*t] = words.get<std::vector<std::string>>();
  }
  corpus.pretrain = read_dataset_jsonl((fs::path(dir) / "pretrain.jsonl").string());
  corpus.mixed = read_dataset_jsonl((fs::path(dir) / "mixed.jsonl").string());
  corpus.dev = read_dataset_jsonl((fs::path(dir) / "dev.jsonl").string());
  corpus.test_general = read_dataset_jsonl((fs::path(dir) / "test_general.jsonl").string());
  corpus.test_specific = read_dataset_jsonl((fs::path(dir) / "test_specific.jsonl").string());
  return corpus;
}

}  // namespace biaslattice
