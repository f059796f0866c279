// tests/test_transducer.cpp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "biaslattice/tokenizer.hpp"
#include "biaslattice/transducer.hpp"
#include "testutil.hpp"

using namespace biaslattice;
using testutil::random_tensor;

namespace {

TransducerConfig tiny_config() {
  TransducerConfig cfg;
  cfg.feature_dim = 3;
  cfg.enc_layers = 2;
  cfg.enc_units = 4;
  cfg.time_reduction_after_layer = 1;
  cfg.time_reduction_factor = 2;
  cfg.pred_layers = 1;
  cfg.pred_units = 4;
  cfg.joint_dim = 4;
  cfg.vocab_size = 5;
  return cfg;
}

LogitLattice random_lattice(int64_t frames, int64_t labels, int64_t vocab, uint64_t seed) {
  LogitLattice l;
  l.values = random_tensor({frames, labels + 1, vocab}, seed, 1.5, false);
  return l;
}

LogitLattice model_lattice(const TransducerModel& m, const Tensor& features,
                           const std::vector<int>& target) {
  Graph g;
  std::vector<Value> enc = encode_audio(g, m, features);
  std::vector<Value> pred = predict(g, m, target);
  return materialize_lattice(g, join(g, m, enc, pred));
}

}  // namespace

TEST_CASE("time reduction length arithmetic") {
  CHECK(reduced_frames(4, 2) == 2);
  CHECK(reduced_frames(5, 2) == 3);
  CHECK(reduced_frames(1, 2) == 1);
  CHECK(reduced_frames(7, 3) == 3);
}

TEST_CASE("encoder output frame count follows the ceil rule") {
  TransducerModel m = TransducerModel::init(tiny_config(), 1);
  for (int64_t frames : {4, 5, 1}) {
    Tensor features = random_tensor({frames, 3}, 100 + static_cast<uint64_t>(frames), 1.0, false);
    Graph g;
    CHECK(static_cast<int64_t>(encode_audio(g, m, features).size()) == reduced_frames(frames, 2));
  }
}

TEST_CASE("zero-weight encoder maps any input to identical rows") {
  TransducerModel m = TransducerModel::init(tiny_config(), 1);
  for (auto& [name, t] : m.named_params())
    for (double& v : t->data) v = 0.0;
  Tensor features = random_tensor({6, 3}, 9, 2.0, false);
  Graph g;
  std::vector<Value> rows = encode_audio(g, m, features);
  const Tensor& first = g.value(rows[0]);
  for (double v : first.data) CHECK(v == 0.0);
  for (const Value& r : rows) CHECK(g.value(r).data == first.data);
}

TEST_CASE("encode_audio rejects empty input") {
  TransducerModel m = TransducerModel::init(tiny_config(), 1);
  Tensor empty({0, 3});
  Graph g;
  CHECK_THROWS_AS(encode_audio(g, m, empty), DataError);
}

TEST_CASE("prediction rows: U+1 rows, row 0 from the start state") {
  TransducerModel m = TransducerModel::init(tiny_config(), 2);
  Graph g;
  CHECK(predict(g, m, std::vector<int>{}).size() == 1);
  std::vector<int> hist = {1, 2, 3};
  CHECK(predict(g, m, hist).size() == 4);
  std::vector<int> with_blank = {1, kBlankId, 2};
  CHECK_THROWS_AS(predict(g, m, with_blank), DataError);
}

TEST_CASE("prediction network is causal over shared prefixes") {
  TransducerModel m = TransducerModel::init(tiny_config(), 3);
  Graph g;
  std::vector<int> a = {2, 3, 4, 1};
  std::vector<int> b = {2, 3, 4, 2};
  std::vector<Value> ra = predict(g, m, a);
  std::vector<Value> rb = predict(g, m, b);
  for (size_t u = 0; u < 4; ++u) CHECK(g.value(ra[u]).data == g.value(rb[u]).data);
  CHECK(g.value(ra[4]).data != g.value(rb[4]).data);
}

TEST_CASE("join cancels additive inverses down to the bias") {
  TransducerModel m = TransducerModel::init(tiny_config(), 4);
  Graph g;
  Tensor e = random_tensor({4}, 77, 1.0, false);
  Tensor p = e;
  for (double& v : p.data) v = -v;
  Value z = join_cell(g, m, g.constant(e), g.constant(p));
  // tanh(0) = 0, so the logits equal the joint bias (zeros at init).
  for (size_t i = 0; i < g.value(z).data.size(); ++i)
    CHECK(g.value(z).data[i] == m.joint_b.data[i]);
}

TEST_CASE("lattice shape contract") {
  TransducerConfig cfg = tiny_config();
  cfg.vocab_size = 4;
  TransducerModel m = TransducerModel::init(cfg, 5);
  Graph g;
  Tensor features = random_tensor({4, 3}, 5, 1.0, false);
  std::vector<Value> enc = encode_audio(g, m, features);  // T' = 2
  std::vector<int> target = {1};
  std::vector<Value> pred = predict(g, m, target);
  Value lattice = join(g, m, enc, pred);
  CHECK(g.value(lattice).shape == std::vector<int64_t>{2, 2, 4});
}

TEST_CASE("scalar joint hand case") {
  // joint_dim 1, V 2, W_o = [1, -1], zero bias, e + p = 0.5.
  TransducerConfig cfg = tiny_config();
  cfg.joint_dim = 1;
  cfg.vocab_size = 3;
  TransducerModel m = TransducerModel::init(cfg, 6);
  m.joint_w = Tensor({1, 3}, {1.0, -1.0, 0.0});
  m.joint_b = Tensor::zeros({3});
  Graph g;
  Value e = g.constant({1}, {0.2});
  Value p = g.constant({1}, {0.3});
  Value z = join_cell(g, m, e, p);
  CHECK(g.value(z).data[0] == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
  CHECK(g.value(z).data[1] == doctest::Approx(-std::tanh(0.5)).epsilon(1e-15));
  CHECK(g.value(z).data[2] == 0.0);
}

TEST_CASE("posterior closed forms") {
  LogitLattice l;
  l.values = Tensor({1, 1, 3}, {std::log(2.0), 0.0, 0.0});
  std::vector<double> p = l.posterior(0, 0);
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(0.25).epsilon(1e-12));

  LogitLattice uniform;
  uniform.values = Tensor::full({1, 1, 4}, 0.7);
  for (double v : uniform.posterior(0, 0)) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  CHECK_THROWS_AS(l.posterior(1, 0), DataError);
  CHECK_THROWS_AS(l.posterior(0, 1), DataError);
}

TEST_CASE("posterior rows sum to one on random lattices") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    LogitLattice l = random_lattice(2, 1, 6, seed);
    for (int64_t t = 0; t < 2; ++t)
      for (int64_t u = 0; u < 2; ++u) {
        std::vector<double> p = l.posterior(t, u);
        double sum = 0.0;
        for (double v : p) {
          CHECK(v >= 0.0);
          sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
      }
  }
}

TEST_CASE("single-path loss is the blank log-probability") {
  LogitLattice l = random_lattice(1, 0, 4, 3);
  double expected = -l.log_posterior(0, 0)[kBlankId];
  CHECK(rnnt_loss_value(l, {}) == doctest::Approx(expected).epsilon(1e-12));
  BruteLoss brute = rnnt_loss_brute(l, {});
  CHECK(brute.paths == 1);
  CHECK(brute.nll == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("two-path uniform lattice") {
  // T'=2, U=1, uniform posteriors over V=3: two alignments of three steps
  // each, every step probability 1/3.
  LogitLattice l;
  l.values = Tensor::zeros({2, 2, 3});
  std::vector<int> target = {1};
  double expected = -std::log(2.0 * std::pow(1.0 / 3.0, 3));
  CHECK(rnnt_loss_value(l, target) == doctest::Approx(expected).epsilon(1e-12));
  BruteLoss brute = rnnt_loss_brute(l, target);
  CHECK(brute.paths == 2);
  CHECK(alignment_path_count(2, 1) == 2);
  CHECK(brute.nll == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("path counts match the closed form via uniform lattices") {
  for (int64_t frames : {1, 2, 3, 4}) {
    for (int64_t labels : {0, 1, 2, 3}) {
      LogitLattice l;
      l.values = Tensor::zeros({frames, labels + 1, 4});
      std::vector<int> target(static_cast<size_t>(labels), 1);
      BruteLoss brute = rnnt_loss_brute(l, target);
      CHECK(brute.paths == alignment_path_count(frames, labels));
      // Uniform posterior closed form: paths * (1/V)^(T'+U).
      double expected =
          -std::log(static_cast<double>(brute.paths) * std::pow(0.25, static_cast<double>(frames + labels)));
      CHECK(brute.nll == doctest::Approx(expected).epsilon(1e-10));
      CHECK(rnnt_loss_value(l, target) == doctest::Approx(expected).epsilon(1e-10));
    }
  }
}

TEST_CASE("forward DP equals brute-force enumeration on random lattices") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    int64_t frames = 1 + static_cast<int64_t>(rng.below(4));
    int64_t labels = static_cast<int64_t>(rng.below(4));
    int64_t vocab = 3 + static_cast<int64_t>(rng.below(4));
    LogitLattice l = random_lattice(frames, labels, vocab, 1000 + static_cast<uint64_t>(trial));
    std::vector<int> target;
    for (int64_t u = 0; u < labels; ++u)
      target.push_back(1 + static_cast<int>(rng.below(static_cast<uint64_t>(vocab - 1))));
    double dp = rnnt_loss_value(l, target);
    double brute = rnnt_loss_brute(l, target).nll;
    CHECK(std::abs(dp - brute) < 1e-10);
  }
}

TEST_CASE("loss input validation") {
  LogitLattice l = random_lattice(2, 1, 4, 7);
  std::vector<int> with_blank = {kBlankId};
  CHECK_THROWS_AS(rnnt_loss_value(l, with_blank), DataError);
  std::vector<int> oor = {9};
  CHECK_THROWS_AS(rnnt_loss_value(l, oor), DataError);
  std::vector<int> wrong_rows = {1, 2};
  CHECK_THROWS_AS(rnnt_loss_value(l, wrong_rows), ShapeError);
}

TEST_CASE("brute force refuses huge instances") {
  LogitLattice l;
  l.values = Tensor::zeros({40, 21, 3});
  std::vector<int> target(20, 1);
  CHECK_THROWS_AS(rnnt_loss_brute(l, target), DataError);
}

TEST_CASE("end-to-end gradient of the transducer loss") {
  TransducerModel m = TransducerModel::init(tiny_config(), 11);
  Tensor features = random_tensor({4, 3}, 70, 1.0, false);
  std::vector<int> target = {1, 3};
  auto build = [&](Graph& g) {
    std::vector<Value> enc = encode_audio(g, m, features);
    std::vector<Value> pred = predict(g, m, target);
    return rnnt_loss(g, join(g, m, enc, pred), target);
  };
  std::vector<const Tensor*> params;
  for (auto& [name, t] : m.named_params()) params.push_back(t);
  CHECK(grad_check(build, params, 1e-5) < 1e-4);
}

TEST_CASE("loss decreases along the negative gradient") {
  TransducerModel m = TransducerModel::init(tiny_config(), 12);
  Tensor features = random_tensor({5, 3}, 71, 1.0, false);
  std::vector<int> target = {2, 4};
  auto loss_value = [&]() {
    Graph g;
    std::vector<Value> enc = encode_audio(g, m, features);
    std::vector<Value> pred = predict(g, m, target);
    Value loss = rnnt_loss(g, join(g, m, enc, pred), target);
    return std::pair<double, Graph*>(g.value(loss).data[0], nullptr);
  };

  Graph g;
  std::vector<Value> enc = encode_audio(g, m, features);
  std::vector<Value> pred = predict(g, m, target);
  Value loss = rnnt_loss(g, join(g, m, enc, pred), target);
  double before = g.value(loss).data[0];
  for (auto& [name, t] : m.named_params()) t->zero_grad();
  g.backward(loss);
  for (auto& [name, t] : m.named_params())
    for (size_t i = 0; i < t->data.size(); ++i) t->data[i] -= 0.05 * t->grad[i];
  CHECK(loss_value().first < before);
}

TEST_CASE("streamability: even-length truncation preserves earlier outputs") {
  TransducerModel m = TransducerModel::init(tiny_config(), 13);
  Tensor features = random_tensor({8, 3}, 72, 1.0, false);
  Graph g;
  std::vector<Value> full = encode_audio(g, m, features);
  for (int64_t cut : {2, 4, 6}) {
    Tensor prefix({cut, 3});
    std::copy(features.data.begin(), features.data.begin() + cut * 3, prefix.data.begin());
    Graph g2;
    std::vector<Value> part = encode_audio(g2, m, prefix);
    REQUIRE(part.size() == static_cast<size_t>(cut / 2));
    for (size_t i = 0; i < part.size(); ++i) CHECK(g2.value(part[i]).data == g.value(full[i]).data);
  }
}

TEST_CASE("parameter census matches the analytic formula") {
  for (uint64_t seed : {1ULL, 2ULL}) {
    TransducerConfig cfg = tiny_config();
    TransducerModel m = TransducerModel::init(cfg, seed);
    CHECK(m.param_count() == analytic_param_count(cfg));
  }
  // Desk-scale config.
  TransducerConfig desk;
  TransducerModel m = TransducerModel::init(desk, 3);
  CHECK(m.param_count() == analytic_param_count(desk));
  // Hand count for the tiny config: two encoder LSTMs (in 3 and 8 after the
  // reduction doubles 4 units), projections, embedding, prediction LSTM,
  // joint layer.
  auto lstm = [](int64_t in, int64_t u) { return 4 * u * (in + u + 2); };
  int64_t expected = lstm(3, 4) + lstm(8, 4) + (4 * 4 + 4) + (5 * 4 + 4) + lstm(4, 4) + (4 * 4 + 4) +
                     (4 * 5 + 5);
  CHECK(analytic_param_count(tiny_config()) == expected);
}

TEST_CASE("checkpoint round trip is bit exact") {
  TransducerModel m = TransducerModel::init(tiny_config(), 21);
  auto dir = testutil::fresh_tmp_dir("ckpt");
  save_transducer(dir.string(), m);
  TransducerModel loaded = load_transducer(dir.string());
  NamedTensors a = m.named_params();
  NamedTensors b = loaded.named_params();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second->data == b[i].second->data);
  }
  CHECK(params_checksum(a) == params_checksum(b));

  Tensor features = random_tensor({5, 3}, 90, 1.0, false);
  std::vector<int> target = {1, 2};
  LogitLattice l1 = model_lattice(m, features, target);
  LogitLattice l2 = model_lattice(loaded, features, target);
  CHECK(l1.values.data == l2.values.data);
}

TEST_CASE("checkpoint kind and corruption are rejected") {
  TransducerModel m = TransducerModel::init(tiny_config(), 22);
  auto dir = testutil::fresh_tmp_dir("ckpt_bad");
  save_transducer(dir.string(), m);
  CHECK_THROWS_AS(load_checkpoint(dir.string(), "adapters", m.named_params()), CheckpointError);
  CHECK_THROWS_AS(load_transducer((dir / "missing").string()), CheckpointError);
}
