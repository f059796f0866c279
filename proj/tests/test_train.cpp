// tests/test_train.cpp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "biaslattice/checkpoint.hpp"
#include "biaslattice/train.hpp"
#include "testutil.hpp"

using namespace biaslattice;

namespace {

SynthConfig tiny_corpus_config() {
  SynthConfig cfg;
  cfg.seed = 11;
  cfg.pretrain_count = 24;
  cfg.mixed_general = 8;  // 12 specific
  cfg.dev_general = 4;
  cfg.dev_specific = 4;
  cfg.test_general = 4;
  cfg.test_specific = 4;
  cfg.lexicon_size = 70;
  return cfg;
}

TransducerConfig tiny_model_config(int64_t vocab) {
  TransducerConfig cfg;
  cfg.feature_dim = 8;
  cfg.enc_layers = 2;
  cfg.enc_units = 8;
  cfg.time_reduction_after_layer = 1;
  cfg.time_reduction_factor = 2;
  cfg.pred_layers = 1;
  cfg.pred_units = 8;
  cfg.joint_dim = 8;
  cfg.vocab_size = vocab;
  return cfg;
}

AdapterConfig tiny_adapter_config(QueryVariant v, int64_t vocab) {
  AdapterConfig cfg;
  cfg.embed_dim = 4;
  cfg.bilstm_units = 4;
  cfg.entity_dim = 4;
  cfg.type_dim = 2;
  cfg.attn_dim = 4;
  cfg.variant = v;
  cfg.site_dim = 8;
  cfg.vocab_size = vocab;
  return cfg;
}

std::vector<Utterance> general_only(const std::vector<Utterance>& utts) {
  std::vector<Utterance> out;
  for (const Utterance& u : utts)
    if (!u.is_specific()) out.push_back(u);
  return out;
}

const Corpus& shared_corpus() {
  static Corpus corpus = gen_corpus(tiny_corpus_config());
  return corpus;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Tensor p = testutil::random_tensor({3}, 1);
  p.ensure_grad();
  std::vector<Tensor*> params = {&p};
  AdamState state = AdamState::init(params);
  TrainConfig cfg;
  std::vector<double> before = p.data;
  adam_step(params, state, cfg);
  CHECK(p.data == before);
  CHECK(state.step == 1);
}

TEST_CASE("adam: bias-corrected first step moves by about lr") {
  Tensor p({1}, {1.0});
  p.requires_grad = true;
  p.ensure_grad();
  p.grad[0] = 1.0;
  std::vector<Tensor*> params = {&p};
  AdamState state = AdamState::init(params);
  TrainConfig cfg;
  cfg.lr = 0.1;
  adam_step(params, state, cfg);
  CHECK(p.data[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p.grad[0] == 0.0);  // grads cleared after the step
}

TEST_CASE("adam: frozen parameters never move") {
  Tensor frozen({2}, {1.0, 2.0});
  frozen.requires_grad = false;
  frozen.ensure_grad();
  frozen.grad = {5.0, 5.0};
  Tensor live({1}, {1.0});
  live.requires_grad = true;
  live.ensure_grad();
  live.grad[0] = 1.0;
  std::vector<Tensor*> params = {&frozen, &live};
  AdamState state = AdamState::init(params);
  TrainConfig cfg;
  adam_step(params, state, cfg);
  CHECK(frozen.data == std::vector<double>{1.0, 2.0});
  CHECK(live.data[0] < 1.0);
}

TEST_CASE("adam: non-finite gradients skip the step") {
  Tensor p({1}, {1.0});
  p.requires_grad = true;
  p.ensure_grad();
  p.grad[0] = std::numeric_limits<double>::quiet_NaN();
  std::vector<Tensor*> params = {&p};
  AdamState state = AdamState::init(params);
  TrainConfig cfg;
  adam_step(params, state, cfg);
  CHECK(p.data[0] == 1.0);
  CHECK(state.skipped == 1);
  CHECK(state.step == 0);
}

TEST_CASE("adam: global norm clipping bounds the update") {
  Tensor p({2}, {0.0, 0.0});
  p.requires_grad = true;
  p.ensure_grad();
  p.grad = {3000.0, 4000.0};  // norm 5000, clipped to 5
  std::vector<Tensor*> params = {&p};
  AdamState state = AdamState::init(params);
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.clip_norm = 5.0;
  adam_step(params, state, cfg);
  // After clipping both coordinates carry finite, lr-scale updates.
  CHECK(std::abs(p.data[0]) <= cfg.lr + 1e-9);
  CHECK(std::abs(p.data[1]) <= cfg.lr + 1e-9);
}

TEST_CASE("pretrain learns and early-stops with best restore") {
  const Corpus& corpus = shared_corpus();
  TransducerModel model =
      TransducerModel::init(tiny_model_config(static_cast<int64_t>(corpus.vocab.size())), 7);
  TrainConfig cfg;
  cfg.lr = 5e-3;  // tiny corpus wants a hotter step than the paper default
  cfg.max_epochs = 6;
  cfg.patience = 3;
  cfg.seed = 7;
  std::vector<Utterance> dev = general_only(corpus.dev);
  TrainResult result = pretrain(cfg, model, corpus.pretrain, dev);
  REQUIRE_FALSE(result.epochs.empty());
  CHECK(result.best_dev_loss < result.initial_dev_loss);
  CHECK(dataset_loss(model, dev) == doctest::Approx(result.best_dev_loss).epsilon(1e-12));
  CHECK_THROWS_AS(pretrain(cfg, model, corpus.mixed, dev), DataError);
}

TEST_CASE("pretraining is seed-deterministic") {
  const Corpus& corpus = shared_corpus();
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.seed = 9;
  std::vector<Utterance> dev = general_only(corpus.dev);
  TransducerModel a =
      TransducerModel::init(tiny_model_config(static_cast<int64_t>(corpus.vocab.size())), 9);
  TransducerModel b =
      TransducerModel::init(tiny_model_config(static_cast<int64_t>(corpus.vocab.size())), 9);
  pretrain(cfg, a, corpus.pretrain, dev);
  pretrain(cfg, b, corpus.pretrain, dev);
  CHECK(params_checksum(a.named_params()) == params_checksum(b.named_params()));
}

TEST_CASE("checkpoint round trip reproduces the dev loss bit-exactly") {
  const Corpus& corpus = shared_corpus();
  TransducerModel model =
      TransducerModel::init(tiny_model_config(static_cast<int64_t>(corpus.vocab.size())), 13);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.seed = 13;
  std::vector<Utterance> dev = general_only(corpus.dev);
  pretrain(cfg, model, corpus.pretrain, dev);
  double loss = dataset_loss(model, dev);
  auto dir = testutil::fresh_tmp_dir("train_ckpt");
  save_transducer(dir.string(), model);
  TransducerModel loaded = load_transducer(dir.string());
  CHECK(dataset_loss(loaded, dev) == loss);
}

TEST_CASE("adapter training freezes the base bit-exactly and starts safe") {
  const Corpus& corpus = shared_corpus();
  int64_t vocab = static_cast<int64_t>(corpus.vocab.size());
  TransducerModel model = TransducerModel::init(tiny_model_config(vocab), 17);
  TrainConfig pre_cfg;
  pre_cfg.max_epochs = 2;
  pre_cfg.seed = 17;
  pretrain(pre_cfg, model, corpus.pretrain, general_only(corpus.dev));
  uint64_t base_before = params_checksum(model.named_params());

  ContextualAdapters adapters =
      ContextualAdapters::init(tiny_adapter_config(QueryVariant::kEncPredQuery, vocab), 18);
  TrainConfig cfg;
  cfg.mode = TrainMode::kAdapter;
  cfg.max_epochs = 3;
  cfg.patience = 3;
  cfg.catalog_k = 6;
  cfg.seed = 18;

  double frozen_dev = dataset_loss(model, corpus.dev);
  TrainResult result = train_adapters(cfg, model, adapters, corpus);

  // Safe start: the zero-initialized adapters evaluate to the frozen
  // baseline's dev loss, bit for bit.
  CHECK(result.initial_dev_loss == frozen_dev);
  // Frozen base: untouched by three epochs of adapter updates.
  CHECK(params_checksum(model.named_params()) == base_before);
  for (const EpochLog& log : result.epochs)
    CHECK(log.frozen_checksum == checksum_hex(base_before));
  // Learnability: dev loss moves below the frozen start.
  CHECK(result.best_dev_loss < result.initial_dev_loss);
  CHECK_THROWS_AS(full_finetune(cfg, model, adapters, corpus), DataError);
}

TEST_CASE("adapter training loss decreases for every query variant") {
  const Corpus& corpus = shared_corpus();
  int64_t vocab = static_cast<int64_t>(corpus.vocab.size());
  TransducerModel model = TransducerModel::init(tiny_model_config(vocab), 19);
  TrainConfig pre_cfg;
  pre_cfg.max_epochs = 2;
  pre_cfg.seed = 19;
  pretrain(pre_cfg, model, corpus.pretrain, general_only(corpus.dev));

  for (QueryVariant v : {QueryVariant::kEncQuery, QueryVariant::kPredQuery,
                         QueryVariant::kEncPredQuery, QueryVariant::kJointQuery}) {
    ContextualAdapters adapters = ContextualAdapters::init(tiny_adapter_config(v, vocab), 20);
    TrainConfig cfg;
    cfg.mode = TrainMode::kAdapter;
    cfg.max_epochs = 3;
    cfg.patience = 3;
    cfg.catalog_k = 6;
    cfg.seed = 20;
    TrainResult result = train_adapters(cfg, model, adapters, corpus);
    REQUIRE(result.epochs.size() == 3);
    CHECK(result.epochs.back().dev_loss < result.initial_dev_loss);
  }
}

TEST_CASE("full fine-tuning updates the base") {
  const Corpus& corpus = shared_corpus();
  int64_t vocab = static_cast<int64_t>(corpus.vocab.size());
  TransducerModel model = TransducerModel::init(tiny_model_config(vocab), 23);
  TrainConfig pre_cfg;
  pre_cfg.max_epochs = 1;
  pre_cfg.seed = 23;
  pretrain(pre_cfg, model, corpus.pretrain, general_only(corpus.dev));
  uint64_t base_before = params_checksum(model.named_params());

  ContextualAdapters adapters =
      ContextualAdapters::init(tiny_adapter_config(QueryVariant::kEncPredQuery, vocab), 24);
  TrainConfig cfg;
  cfg.mode = TrainMode::kFullFinetune;
  cfg.max_epochs = 2;
  cfg.catalog_k = 6;
  cfg.seed = 24;
  full_finetune(cfg, model, adapters, corpus);
  CHECK(params_checksum(model.named_params()) != base_before);
}

TEST_CASE("train config json round trip and validation") {
  TrainConfig cfg;
  cfg.mode = TrainMode::kAdapter;
  cfg.lr = 1e-3;
  TrainConfig parsed = TrainConfig::from_json(cfg.to_json());
  CHECK(parsed.lr == cfg.lr);
  CHECK(parsed.mode == TrainMode::kAdapter);
  TrainConfig bad;
  bad.lr = 0;
  CHECK_THROWS_AS(bad.validate(), DataError);
  TrainConfig bad2;
  bad2.patience = 0;
  CHECK_THROWS_AS(bad2.validate(), DataError);
}
