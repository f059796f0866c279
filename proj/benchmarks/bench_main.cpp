// benchmarks/bench_main.cpp

#include <benchmark/benchmark.h>

#include "biaslattice/adapters.hpp"
#include "biaslattice/data.hpp"
#include "biaslattice/decode.hpp"
#include "biaslattice/train.hpp"
#include "biaslattice/transducer.hpp"

using namespace biaslattice;

namespace {

TransducerConfig bench_config() {
  TransducerConfig cfg;
  cfg.feature_dim = 8;
  cfg.enc_units = 32;
  cfg.pred_units = 32;
  cfg.joint_dim = 32;
  cfg.vocab_size = 64;
  return cfg;
}

Tensor random_features(int64_t frames, uint64_t seed) {
  Rng rng(seed);
  Tensor t({frames, 8});
  for (double& v : t.data) v = rng.normal();
  return t;
}

std::vector<int> random_target(size_t len, uint64_t seed) {
  Rng rng(seed);
  std::vector<int> out;
  for (size_t i = 0; i < len; ++i) out.push_back(2 + static_cast<int>(rng.below(60)));
  return out;
}

void BM_RnntLossForwardBackward(benchmark::State& state) {
  int64_t frames = state.range(0);
  size_t labels = static_cast<size_t>(state.range(1));
  Rng rng(1);
  Tensor lattice({frames, static_cast<int64_t>(labels) + 1, 64});
  for (double& v : lattice.data) v = rng.normal();
  std::vector<int> target = random_target(labels, 2);
  for (auto _ : state) {
    Graph g;
    Value lat = g.constant(lattice);
    // Constant input: exercises the loss DP itself.
    Value loss = rnnt_loss(g, lat, target);
    benchmark::DoNotOptimize(g.value(loss).data[0]);
  }
}
BENCHMARK(BM_RnntLossForwardBackward)->Args({10, 8})->Args({20, 12})->Args({40, 20});

void BM_UtteranceForwardBackward(benchmark::State& state) {
  TransducerModel model = TransducerModel::init(bench_config(), 3);
  Tensor features = random_features(state.range(0), 4);
  std::vector<int> target = random_target(10, 5);
  for (auto _ : state) {
    Graph g;
    std::vector<Value> enc = encode_audio(g, model, features);
    std::vector<Value> pred = predict(g, model, target);
    Value loss = rnnt_loss(g, join(g, model, enc, pred), target);
    g.backward(loss);
    benchmark::DoNotOptimize(model.joint_w.grad.data());
    for (auto& [name, t] : model.named_params()) t->zero_grad();
  }
}
BENCHMARK(BM_UtteranceForwardBackward)->Arg(20)->Arg(40);

void BM_BeamDecode(benchmark::State& state) {
  TransducerModel model = TransducerModel::init(bench_config(), 6);
  model.joint_b.data[kBlankId] += 2.0;
  Tensor features = random_features(24, 7);
  DecodeOptions opts;
  opts.beam = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Nbest nb = beam_decode(model, nullptr, nullptr, nullptr, nullptr, features, opts);
    benchmark::DoNotOptimize(nb.hyps.data());
  }
}
BENCHMARK(BM_BeamDecode)->Arg(1)->Arg(4)->Arg(8);

void BM_CatalogEncode(benchmark::State& state) {
  SynthConfig scfg;
  scfg.pretrain_count = 8;
  scfg.mixed_general = 2;
  scfg.dev_general = 1;
  scfg.dev_specific = 1;
  scfg.test_general = 1;
  scfg.test_specific = 1;
  Corpus corpus = gen_corpus(scfg);
  AdapterConfig acfg;
  acfg.vocab_size = static_cast<int64_t>(corpus.vocab.size());
  ContextualAdapters adapters = ContextualAdapters::init(acfg, 8);
  Catalog cat = sample_catalog(corpus.mixed[0], corpus.lexicons, static_cast<int>(state.range(0)), 9);
  for (auto _ : state) {
    Graph g;
    EncodedCatalog ec = encode_catalog(g, adapters, cat, corpus.vocab);
    benchmark::DoNotOptimize(g.value(ec.rows).data.data());
  }
}
BENCHMARK(BM_CatalogEncode)->Arg(4)->Arg(16)->Arg(64);

void BM_AdamStep(benchmark::State& state) {
  TransducerModel model = TransducerModel::init(bench_config(), 10);
  std::vector<Tensor*> params;
  for (auto& [name, t] : model.named_params()) {
    t->ensure_grad();
    for (double& gv : t->grad) gv = 0.01;
    params.push_back(t);
  }
  AdamState adam = AdamState::init(params);
  TrainConfig cfg;
  for (auto _ : state) {
    for (Tensor* p : params)
      for (double& gv : p->grad) gv = 0.01;
    adam_step(params, adam, cfg);
    benchmark::DoNotOptimize(params[0]->data.data());
  }
}
BENCHMARK(BM_AdamStep);

}  // namespace

BENCHMARK_MAIN();
