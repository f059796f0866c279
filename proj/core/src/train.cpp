// core/src/train.cpp

#include "biaslattice/train.hpp"

#include <algorithm>
#include <cmath>

#include "biaslattice/checkpoint.hpp"
#include "json.hpp"

namespace biaslattice {

using nlohmann::json;

const char* train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::kPretrain: return "pretrain";
    case TrainMode::kAdapter: return "adapter";
    case TrainMode::kFullFinetune: return "full-finetune";
  }
  return "?";
}

std::optional<TrainMode> train_mode_from_name(const std::string& name) {
  if (name == "pretrain") return TrainMode::kPretrain;
  if (name == "adapter") return TrainMode::kAdapter;
  if (name == "full-finetune") return TrainMode::kFullFinetune;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (lr <= 0) throw DataError("train config: lr must be > 0");
  if (mix_ratio_m <= 0) throw DataError("train config: mix ratio must be > 0");
  if (patience < 1) throw DataError("train config: patience must be >= 1");
  if (batch_size < 1) throw DataError("train config: batch_size must be >= 1");
  if (max_epochs < 1) throw DataError("train config: max_epochs must be >= 1");
  if (catalog_k < 1 || catalog_k > kMaxCatalogSize)
    throw DataError(strcat_all("train config: catalog_k must be in [1,", kMaxCatalogSize, "]"));
}

std::string TrainConfig::to_json() const {
  json j;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["eps"] = eps;
  j["batch_size"] = batch_size;
  j["mix_ratio_m"] = mix_ratio_m;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["clip_norm"] = clip_norm;
  j["mode"] = train_mode_name(mode);
  j["catalog_k"] = catalog_k;
  j["seed"] = seed;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.mix_ratio_m = j.value("mix_ratio_m", c.mix_ratio_m);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  if (j.contains("mode")) {
    auto m = train_mode_from_name(j["mode"].get<std::string>());
    if (!m) throw DataError("train config: bad mode");
    c.mode = *m;
  }
  c.catalog_k = j.value("catalog_k", c.catalog_k);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

AdamState AdamState::init(const std::vector<Tensor*>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (Tensor* p : params) {
    s.m.push_back(Tensor(p->shape));
    s.v.push_back(Tensor(p->shape));
  }
  return s;
}

void adam_step(const std::vector<Tensor*>& params, AdamState& state, const TrainConfig& cfg) {
  if (state.m.size() != params.size())
    throw Error("adam_step: state does not match parameter list");

  // Global grad norm over trainable params; frozen params never move.
  double sq = 0.0;
  bool finite = true;
  for (Tensor* p : params) {
    if (!p->requires_grad || p->grad.empty()) continue;
    for (double g : p->grad) {
      if (!std::isfinite(g)) finite = false;
      sq += g * g;
    }
  }
  if (!finite) {
    ++state.skipped;
    for (Tensor* p : params) p->zero_grad();
    return;
  }
  double norm = std::sqrt(sq);
  double scale = (cfg.clip_norm > 0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;

  ++state.step;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (size_t i = 0; i < params.size(); ++i) {
    Tensor* p = params[i];
    if (!p->requires_grad) continue;
    p->ensure_grad();
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (size_t k = 0; k < p->data.size(); ++k) {
      double g = p->grad[k] * scale;
      m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * g;
      v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * g * g;
      double mhat = m.data[k] / bc1;
      double vhat = v.data[k] / bc2;
      p->data[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    p->zero_grad();
  }
}

namespace {

Value build_loss(Graph& g, const TransducerModel& model, const ContextualAdapters* adapters,
                 const Catalog* catalog, const Vocab* vocab, const Utterance& utt) {
  std::vector<Value> enc_rows = encode_audio(g, model, utt.features);
  std::vector<Value> pred_rows = predict(g, model, utt.tokens);
  Value lattice;
  if (adapters) {
    EncodedCatalog cat = encode_catalog(g, *adapters, *catalog, *vocab);
    AdaptedInputs adapted = adapt(g, adapters->cfg.variant, *adapters, enc_rows, pred_rows, cat);
    lattice = join(g, model, adapted.enc_rows, adapted.pred_rows,
                   adapted.joint_hook ? &adapted.joint_hook : nullptr);
  } else {
    lattice = join(g, model, enc_rows, pred_rows);
  }
  return rnnt_loss(g, lattice, utt.tokens);
}

double loss_only(const TransducerModel& model, const ContextualAdapters* adapters,
                 const Catalog* catalog, const Vocab* vocab, const Utterance& utt) {
  Graph g;
  Value loss = build_loss(g, model, adapters, catalog, vocab, utt);
  return g.value(loss).data[0];
}

struct Snapshot {
  std::vector<std::vector<double>> data;
  static Snapshot take(const std::vector<Tensor*>& params) {
    Snapshot s;
    s.data.reserve(params.size());
    for (Tensor* p : params) s.data.push_back(p->data);
    return s;
  }
  void restore(const std::vector<Tensor*>& params) const {
    for (size_t i = 0; i < params.size(); ++i) params[i]->data = data[i];
  }
};

struct EpochPlan {
  std::vector<size_t> order;
};

EpochPlan shuffled_epoch(size_t n, uint64_t seed, int epoch) {
  EpochPlan plan;
  plan.order.resize(n);
  for (size_t i = 0; i < n; ++i) plan.order[i] = i;
  Rng rng(mix_seed(seed, 0x65706f6368ULL, static_cast<uint64_t>(epoch)));
  rng.shuffle(plan.order);
  return plan;
}

// Shared epoch/early-stop/restore-best loop. `batch_grad` runs forward and
// backward for one utterance index with the given loss scale and returns the
// unscaled loss; `dev_eval` returns the current dev loss.
TrainResult run_training(const TrainConfig& cfg, size_t train_size,
                         const std::vector<Tensor*>& step_params,
                         const std::function<void(int)>& epoch_start,
                         const std::function<double(size_t, double)>& batch_grad,
                         const std::function<double()>& dev_eval,
                         const std::function<std::string()>& frozen_checksum,
                         const EpochCallback& on_epoch) {
  TrainResult result;
  AdamState adam = AdamState::init(step_params);

  double best_dev = dev_eval();
  Snapshot best = Snapshot::take(step_params);
  result.initial_dev_loss = best_dev;
  result.best_dev_loss = best_dev;
  result.best_epoch = 0;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (epoch_start) epoch_start(epoch);
    EpochPlan plan = shuffled_epoch(train_size, cfg.seed, epoch);
    double epoch_loss = 0.0;
    size_t done = 0;
    while (done < plan.order.size()) {
      size_t batch = std::min(static_cast<size_t>(cfg.batch_size), plan.order.size() - done);
      double inv = 1.0 / static_cast<double>(batch);
      for (size_t b = 0; b < batch; ++b) {
        double loss = batch_grad(plan.order[done + b], inv);
        if (!std::isfinite(loss))
          throw Error(strcat_all("training diverged: non-finite loss at epoch ", epoch));
        epoch_loss += loss;
      }
      adam_step(step_params, adam, cfg);
      done += batch;
    }
    epoch_loss /= static_cast<double>(plan.order.size());

    double dev = dev_eval();
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss;
    log.dev_loss = dev;
    log.lr = cfg.lr;
    if (frozen_checksum) log.frozen_checksum = frozen_checksum();
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);

    if (dev < best_dev) {
      best_dev = dev;
      best = Snapshot::take(step_params);
      result.best_dev_loss = dev;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.stopped_epoch = epoch;
    if (since_best >= cfg.patience) break;
  }

  best.restore(step_params);
  return result;
}

std::vector<Tensor*> tensor_ptrs(const NamedTensors& named) {
  std::vector<Tensor*> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

}  // namespace

double dataset_loss(const TransducerModel& model, const std::vector<Utterance>& utts) {
  double total = 0.0;
  for (const Utterance& u : utts) total += loss_only(model, nullptr, nullptr, nullptr, u);
  return total / static_cast<double>(utts.size());
}

double dataset_loss_adapted(const TransducerModel& model, const ContextualAdapters& adapters,
                            const std::vector<Utterance>& utts, const std::vector<Catalog>& catalogs,
                            const Vocab& vocab) {
  if (utts.size() != catalogs.size()) throw Error("dataset_loss_adapted: catalog count mismatch");
  double total = 0.0;
  for (size_t i = 0; i < utts.size(); ++i)
    total += loss_only(model, &adapters, &catalogs[i], &vocab, utts[i]);
  return total / static_cast<double>(utts.size());
}

std::vector<Catalog> dev_catalogs(const std::vector<Utterance>& dev, const Lexicons& lexicons, int k,
                                  uint64_t seed) {
  std::vector<Catalog> out;
  out.reserve(dev.size());
  for (size_t i = 0; i < dev.size(); ++i)
    out.push_back(sample_catalog(dev[i], lexicons, k, mix_seed(seed, 0x646576636174ULL, i)));
  return out;
}

TrainResult pretrain(const TrainConfig& cfg, TransducerModel& model, const std::vector<Utterance>& train,
                     const std::vector<Utterance>& dev, const EpochCallback& on_epoch) {
  cfg.validate();
  for (const Utterance& u : train)
    if (u.is_specific()) throw DataError("pretrain: training set must be general-only");

  model.set_requires_grad(true);
  std::vector<Tensor*> params = tensor_ptrs(model.named_params());
  for (Tensor* p : params) p->zero_grad();

  auto batch_grad = [&](size_t idx, double scale) {
    Graph g;
    Value loss = build_loss(g, model, nullptr, nullptr, nullptr, train[idx]);
    double v = g.value(loss).data[0];
    g.backward(g.scale(loss, scale));
    return v;
  };
  auto dev_eval = [&]() { return dataset_loss(model, dev); };

  return run_training(cfg, train.size(), params, nullptr, batch_grad, dev_eval, nullptr, on_epoch);
}

namespace {

TrainResult contextual_training(const TrainConfig& cfg, const TransducerModel& model,
                                ContextualAdapters& adapters, const Corpus& corpus, bool freeze_base,
                                const EpochCallback& on_epoch) {
  cfg.validate();
  // The frozen mask: mutating requires_grad on the base both stops gradient
  // work in the tape and excludes the params from the Adam step.
  auto& mutable_model = const_cast<TransducerModel&>(model);
  mutable_model.set_requires_grad(!freeze_base);
  adapters.set_requires_grad(true);

  NamedTensors base_named = mutable_model.named_params();
  uint64_t base_checksum = params_checksum(base_named);

  std::vector<Tensor*> params;
  for (auto& [name, t] : base_named) params.push_back(t);
  for (auto& [name, t] : adapters.named_params()) params.push_back(t);
  for (Tensor* p : params) p->zero_grad();

  const std::vector<Utterance>& train = corpus.mixed;
  std::vector<Catalog> dev_cats =
      dev_catalogs(corpus.dev, corpus.lexicons, cfg.catalog_k, cfg.seed);

  std::vector<Catalog> epoch_cats(train.size());
  auto epoch_start = [&](int epoch) {
    // Fresh distractors each epoch so adapters cannot memorize positions.
    for (size_t i = 0; i < train.size(); ++i)
      epoch_cats[i] = sample_catalog(train[i], corpus.lexicons, cfg.catalog_k,
                                     mix_seed(cfg.seed, static_cast<uint64_t>(epoch), i));
  };

  auto batch_grad = [&](size_t idx, double scale) {
    Graph g;
    Value loss = build_loss(g, model, &adapters, &epoch_cats[idx], &corpus.vocab, train[idx]);
    double v = g.value(loss).data[0];
    g.backward(g.scale(loss, scale));
    return v;
  };
  auto dev_eval = [&]() {
    return dataset_loss_adapted(model, adapters, corpus.dev, dev_cats, corpus.vocab);
  };
  auto frozen_checksum = [&]() -> std::string {
    uint64_t check = params_checksum(base_named);
    if (freeze_base && check != base_checksum)
      throw Error("train_adapters: frozen base parameters drifted (checksum mismatch)");
    return checksum_hex(check);
  };

  TrainResult result = run_training(cfg, train.size(), params, epoch_start, batch_grad, dev_eval,
                                    frozen_checksum, on_epoch);
  mutable_model.set_requires_grad(true);
  return result;
}

}  // namespace

TrainResult train_adapters(const TrainConfig& cfg, const TransducerModel& model,
                           ContextualAdapters& adapters, const Corpus& corpus,
                           const EpochCallback& on_epoch) {
  if (cfg.mode != TrainMode::kAdapter)
    throw DataError("train_adapters: config mode must be 'adapter'");
  return contextual_training(cfg, model, adapters, corpus, /*freeze_base=*/true, on_epoch);
}

TrainResult full_finetune(const TrainConfig& cfg, TransducerModel& model, ContextualAdapters& adapters,
                          const Corpus& corpus, const EpochCallback& on_epoch) {
  if (cfg.mode != TrainMode::kFullFinetune)
    throw DataError("full_finetune: config mode must be 'full-finetune'");
  return contextual_training(cfg, model, adapters, corpus, /*freeze_base=*/false, on_epoch);
}

}  // namespace biaslattice
