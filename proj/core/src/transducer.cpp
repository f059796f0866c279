// core/src/transducer.cpp

#include "biaslattice/transducer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "biaslattice/tokenizer.hpp"

#include "json.hpp"

namespace biaslattice {

using nlohmann::json;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

void check_target(std::span<const int> target, int64_t vocab) {
  for (int y : target) {
    if (y == kBlankId) throw DataError("rnnt loss: target contains blank");
    if (y < 0 || y >= vocab)
      throw DataError(strcat_all("rnnt loss: target id ", y, " out of range [1,", vocab, ")"));
  }
}

}  // namespace

void TransducerConfig::validate() const {
  if (feature_dim < 1 || enc_units < 1 || pred_units < 1 || joint_dim < 1)
    throw DataError("transducer config: all dims must be >= 1");
  if (enc_layers < 1 || pred_layers < 1) throw DataError("transducer config: layer counts must be >= 1");
  if (time_reduction_factor < 1) throw DataError("transducer config: time_reduction_factor must be >= 1");
  if (time_reduction_after_layer < 0 || time_reduction_after_layer > enc_layers)
    throw DataError("transducer config: time_reduction_after_layer out of range");
  if (vocab_size < 3) throw DataError("transducer config: vocab_size must be >= 3");
}

std::string TransducerConfig::to_json() const {
  json j;
  j["feature_dim"] = feature_dim;
  j["enc_layers"] = enc_layers;
  j["enc_units"] = enc_units;
  j["time_reduction_after_layer"] = time_reduction_after_layer;
  j["time_reduction_factor"] = time_reduction_factor;
  j["pred_layers"] = pred_layers;
  j["pred_units"] = pred_units;
  j["joint_dim"] = joint_dim;
  j["vocab_size"] = vocab_size;
  return j.dump();
}

TransducerConfig TransducerConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  TransducerConfig c;
  c.feature_dim = j.at("feature_dim").get<int64_t>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.enc_units = j.at("enc_units").get<int64_t>();
  c.time_reduction_after_layer = j.at("time_reduction_after_layer").get<int>();
  c.time_reduction_factor = j.at("time_reduction_factor").get<int>();
  c.pred_layers = j.at("pred_layers").get<int>();
  c.pred_units = j.at("pred_units").get<int64_t>();
  c.joint_dim = j.at("joint_dim").get<int64_t>();
  c.vocab_size = j.at("vocab_size").get<int64_t>();
  c.validate();
  return c;
}

TransducerModel TransducerModel::init(const TransducerConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(mix_seed(seed, 0x7261736475636572ULL));
  TransducerModel m;
  m.cfg = cfg;

  int64_t in_dim = cfg.feature_dim;
  for (int l = 1; l <= cfg.enc_layers; ++l) {
    m.encoder.push_back(LstmParams::init(in_dim, cfg.enc_units, rng));
    in_dim = cfg.enc_units;
    if (l == cfg.time_reduction_after_layer) in_dim *= cfg.time_reduction_factor;
  }
  m.enc_proj_w = uniform_init({in_dim, cfg.joint_dim}, in_dim, rng);
  m.enc_proj_b = Tensor::zeros({cfg.joint_dim});
  m.enc_proj_b.requires_grad = true;

  m.embed = uniform_init({cfg.vocab_size, cfg.pred_units}, cfg.pred_units, rng);
  m.start_embed = uniform_init({cfg.pred_units}, cfg.pred_units, rng);
  int64_t pin = cfg.pred_units;
  for (int l = 0; l < cfg.pred_layers; ++l) {
    m.prediction.push_back(LstmParams::init(pin, cfg.pred_units, rng));
    pin = cfg.pred_units;
  }
  m.pred_proj_w = uniform_init({cfg.pred_units, cfg.joint_dim}, cfg.pred_units, rng);
  m.pred_proj_b = Tensor::zeros({cfg.joint_dim});
  m.pred_proj_b.requires_grad = true;

  m.joint_w = uniform_init({cfg.joint_dim, cfg.vocab_size}, cfg.joint_dim, rng);
  m.joint_b = Tensor::zeros({cfg.vocab_size});
  m.joint_b.requires_grad = true;
  return m;
}

NamedTensors TransducerModel::named_params() {
  NamedTensors out;
  for (size_t l = 0; l < encoder.size(); ++l)
    encoder[l].collect(strcat_all("encoder.l", l), out);
  out.emplace_back("encoder.proj_w", &enc_proj_w);
  out.emplace_back("encoder.proj_b", &enc_proj_b);
  out.emplace_back("prediction.embed", &embed);
  out.emplace_back("prediction.start_embed", &start_embed);
  for (size_t l = 0; l < prediction.size(); ++l)
    prediction[l].collect(strcat_all("prediction.l", l), out);
  out.emplace_back("prediction.proj_w", &pred_proj_w);
  out.emplace_back("prediction.proj_b", &pred_proj_b);
  out.emplace_back("joint.w", &joint_w);
  out.emplace_back("joint.b", &joint_b);
  return out;
}

NamedTensors TransducerModel::named_params() const {
  return const_cast<TransducerModel*>(this)->named_params();
}

int64_t TransducerModel::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : named_params()) n += t->numel();
  return n;
}

void TransducerModel::set_requires_grad(bool on) {
  for (auto& [name, t] : named_params()) t->requires_grad = on;
}

int64_t analytic_param_count(const TransducerConfig& cfg) {
  auto lstm = [](int64_t in, int64_t u) { return 4 * u * (in + u + 2); };
  int64_t n = 0;
  int64_t in_dim = cfg.feature_dim;
  for (int l = 1; l <= cfg.enc_layers; ++l) {
    n += lstm(in_dim, cfg.enc_units);
    in_dim = cfg.enc_units;
    if (l == cfg.time_reduction_after_layer) in_dim *= cfg.time_reduction_factor;
  }
  n += in_dim * cfg.joint_dim + cfg.joint_dim;                       // encoder projection
  n += cfg.vocab_size * cfg.pred_units + cfg.pred_units;             // embedding + start embedding
  int64_t pin = cfg.pred_units;
  for (int l = 0; l < cfg.pred_layers; ++l) {
    n += lstm(pin, cfg.pred_units);
    pin = cfg.pred_units;
  }
  n += cfg.pred_units * cfg.joint_dim + cfg.joint_dim;               // prediction projection
  n += cfg.joint_dim * cfg.vocab_size + cfg.vocab_size;              // joint dense
  return n;
}

int64_t reduced_frames(int64_t t, int factor) {
  return (t + factor - 1) / factor;
}

std::vector<Value> encode_audio(Graph& g, const TransducerModel& m, const Tensor& features) {
  if (features.rank() != 2 || features.dim(1) != m.cfg.feature_dim)
    throw ShapeError(strcat_all("encode_audio: features ", features.shape_str(), ", expected [T,",
                                m.cfg.feature_dim, "]"));
  int64_t frames = features.dim(0);
  if (frames < 1) throw DataError("encode_audio: empty feature sequence");

  std::vector<Value> seq;
  seq.reserve(static_cast<size_t>(frames));
  for (int64_t t = 0; t < frames; ++t) {
    std::vector<double> row(features.data.begin() + t * m.cfg.feature_dim,
                            features.data.begin() + (t + 1) * m.cfg.feature_dim);
    seq.push_back(g.constant({m.cfg.feature_dim}, std::move(row)));
  }

  for (int l = 1; l <= m.cfg.enc_layers; ++l) {
    seq = lstm_run(g, m.encoder[static_cast<size_t>(l - 1)], seq);
    if (l == m.cfg.time_reduction_after_layer && m.cfg.time_reduction_factor > 1) {
      int f = m.cfg.time_reduction_factor;
      std::vector<Value> reduced;
      reduced.reserve(static_cast<size_t>(reduced_frames(static_cast<int64_t>(seq.size()), f)));
      for (size_t start = 0; start < seq.size(); start += static_cast<size_t>(f)) {
        std::vector<Value> group;
        for (int k = 0; k < f; ++k) {
          size_t idx = std::min(start + static_cast<size_t>(k), seq.size() - 1);
          group.push_back(seq[idx]);  // duplicates the last frame on a ragged tail
        }
        reduced.push_back(g.concat(group));
      }
      seq = std::move(reduced);
    }
  }

  std::vector<Value> out;
  out.reserve(seq.size());
  Value w = g.param(m.enc_proj_w);
  Value b = g.param(m.enc_proj_b);
  for (Value h : seq) out.push_back(g.add(g.matmul(h, w), b));
  return out;
}

PredState pred_start(Graph& g, const TransducerModel& m) {
  PredState s;
  Value x = g.param(m.start_embed);
  for (const LstmParams& layer : m.prediction) {
    LstmState ls = lstm_step(g, layer, lstm_start(g, layer), x);
    x = ls.h;
    s.layers.push_back(ls);
  }
  s.out = g.add(g.matmul(x, g.param(m.pred_proj_w)), g.param(m.pred_proj_b));
  return s;
}

PredState pred_step(Graph& g, const TransducerModel& m, const PredState& s, int token) {
  if (token == kBlankId) throw DataError("predict: blank in history");
  if (token < 0 || token >= m.cfg.vocab_size)
    throw DataError(strcat_all("predict: token ", token, " out of range"));
  PredState next;
  Value x = g.row(g.param(m.embed), token);
  for (size_t l = 0; l < m.prediction.size(); ++l) {
    LstmState ls = lstm_step(g, m.prediction[l], s.layers[l], x);
    x = ls.h;
    next.layers.push_back(ls);
  }
  next.out = g.add(g.matmul(x, g.param(m.pred_proj_w)), g.param(m.pred_proj_b));
  return next;
}

std::vector<Value> predict(Graph& g, const TransducerModel& m, std::span<const int> history) {
  std::vector<Value> rows;
  rows.reserve(history.size() + 1);
  PredState s = pred_start(g, m);
  rows.push_back(s.out);
  for (int y : history) {
    s = pred_step(g, m, s, y);
    rows.push_back(s.out);
  }
  return rows;
}

Value join_cell(Graph& g, const TransducerModel& m, Value enc_row, Value pred_row,
                const JointHook* hook) {
  Value j = g.add(enc_row, pred_row);
  if (hook && *hook) j = (*hook)(g, j);
  return g.add(g.matmul(g.tanh(j), g.param(m.joint_w)), g.param(m.joint_b));
}

Value join(Graph& g, const TransducerModel& m, std::span<const Value> enc_rows,
           std::span<const Value> pred_rows, const JointHook* hook) {
  if (enc_rows.empty() || pred_rows.empty()) throw ShapeError("join: empty inputs");
  std::vector<Value> cells;
  cells.reserve(enc_rows.size() * pred_rows.size());
  for (Value e : enc_rows)
    for (Value p : pred_rows) cells.push_back(join_cell(g, m, e, p, hook));
  return g.stack(cells, {static_cast<int64_t>(enc_rows.size()), static_cast<int64_t>(pred_rows.size()),
                         m.cfg.vocab_size});
}

std::vector<double> LogitLattice::log_posterior(int64_t t, int64_t u) const {
  if (t < 0 || t >= frames() || u < 0 || u >= rows())
    throw DataError(strcat_all("posterior: index (", t, ",", u, ") out of range for ",
                               values.shape_str()));
  int64_t v = vocab();
  std::vector<double> out(static_cast<size_t>(v));
  const double* z = values.data.data() + (t * rows() + u) * v;
  double mx = z[0];
  for (int64_t k = 1; k < v; ++k) mx = std::max(mx, z[k]);
  double sum = 0.0;
  for (int64_t k = 0; k < v; ++k) sum += std::exp(z[k] - mx);
  double lse = mx + std::log(sum);
  for (int64_t k = 0; k < v; ++k) out[static_cast<size_t>(k)] = z[k] - lse;
  return out;
}

std::vector<double> LogitLattice::posterior(int64_t t, int64_t u) const {
  std::vector<double> lp = log_posterior(t, u);
  for (double& x : lp) x = std::exp(x);
  return lp;
}

LogitLattice materialize_lattice(const Graph& g, Value lattice) {
  LogitLattice out;
  out.values = g.value(lattice);
  if (out.values.rank() != 3) throw ShapeError("materialize_lattice: expected rank-3 lattice");
  return out;
}

namespace {

// Shared forward-backward. Returns -log P(target | lattice); when grad is
// non-null, fills it with d(loss)/d(logits).
double rnnt_forward_backward(const Tensor& z, std::span<const int> target, Tensor* grad) {
  int64_t frames = z.dim(0);
  int64_t rows = z.dim(1);
  int64_t vocab = z.dim(2);
  int64_t labels = static_cast<int64_t>(target.size());
  if (frames < 1) throw DataError("rnnt loss: T' = 0");
  if (rows != labels + 1)
    throw ShapeError(strcat_all("rnnt loss: lattice has ", rows, " rows, target needs ", labels + 1));
  check_target(target, vocab);

  // Per-cell log-normalizers.
  std::vector<double> lse(static_cast<size_t>(frames * rows));
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t u = 0; u < rows; ++u) {
      const double* zc = z.data.data() + (t * rows + u) * vocab;
      double mx = zc[0];
      for (int64_t k = 1; k < vocab; ++k) mx = std::max(mx, zc[k]);
      double s = 0.0;
      for (int64_t k = 0; k < vocab; ++k) s += std::exp(zc[k] - mx);
      lse[static_cast<size_t>(t * rows + u)] = mx + std::log(s);
    }
  auto lp = [&](int64_t t, int64_t u, int64_t k) {
    return z.data[static_cast<size_t>((t * rows + u) * vocab + k)] -
           lse[static_cast<size_t>(t * rows + u)];
  };

  std::vector<double> alpha(static_cast<size_t>(frames * rows), kNegInf);
  alpha[0] = 0.0;
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t u = 0; u < rows; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kNegInf;
      if (t > 0) a = logaddexp(a, alpha[static_cast<size_t>((t - 1) * rows + u)] + lp(t - 1, u, kBlankId));
      if (u > 0)
        a = logaddexp(a, alpha[static_cast<size_t>(t * rows + u - 1)] +
                             lp(t, u - 1, target[static_cast<size_t>(u - 1)]));
      alpha[static_cast<size_t>(t * rows + u)] = a;
    }
  double log_p = alpha[static_cast<size_t>((frames - 1) * rows + labels)] +
                 lp(frames - 1, labels, kBlankId);
  if (!std::isfinite(log_p)) throw Error("rnnt loss: non-finite log-likelihood");

  if (grad) {
    std::vector<double> beta(static_cast<size_t>(frames * rows), kNegInf);
    beta[static_cast<size_t>((frames - 1) * rows + labels)] = lp(frames - 1, labels, kBlankId);
    for (int64_t t = frames - 1; t >= 0; --t)
      for (int64_t u = labels; u >= 0; --u) {
        if (t == frames - 1 && u == labels) continue;
        double b = kNegInf;
        if (t < frames - 1)
          b = logaddexp(b, lp(t, u, kBlankId) + beta[static_cast<size_t>((t + 1) * rows + u)]);
        if (u < labels)
          b = logaddexp(b, lp(t, u, target[static_cast<size_t>(u)]) +
                               beta[static_cast<size_t>(t * rows + u + 1)]);
        beta[static_cast<size_t>(t * rows + u)] = b;
      }

    *grad = Tensor(z.shape);
    for (int64_t t = 0; t < frames; ++t)
      for (int64_t u = 0; u < rows; ++u) {
        double a = alpha[static_cast<size_t>(t * rows + u)];
        if (a == kNegInf) continue;
        // Occupancy of the blank / label transition out of (t,u).
        double g_blank = 0.0;
        if (t < frames - 1)
          g_blank = std::exp(a + lp(t, u, kBlankId) +
                             beta[static_cast<size_t>((t + 1) * rows + u)] - log_p);
        else if (u == labels)
          g_blank = std::exp(a + lp(t, u, kBlankId) - log_p);
        double g_label = 0.0;
        int64_t y = (u < labels) ? target[static_cast<size_t>(u)] : -1;
        if (u < labels)
          g_label = std::exp(a + lp(t, u, y) + beta[static_cast<size_t>(t * rows + u + 1)] - log_p);
        if (g_blank == 0.0 && g_label == 0.0) continue;
        double total = g_blank + g_label;
        double* gc = grad->data.data() + (t * rows + u) * vocab;
        const double* zc = z.data.data() + (t * rows + u) * vocab;
        double cell_lse = lse[static_cast<size_t>(t * rows + u)];
        for (int64_t k = 0; k < vocab; ++k) gc[k] += total * std::exp(zc[k] - cell_lse);
        gc[kBlankId] -= g_blank;
        if (u < labels) gc[y] -= g_label;
      }
  }
  return -log_p;
}

}  // namespace

Value rnnt_loss(Graph& g, Value lattice, std::span<const int> target) {
  const Tensor& z = g.value(lattice);
  if (z.rank() != 3) throw ShapeError("rnnt loss: lattice must be rank-3");
  Tensor grad;
  double loss = rnnt_forward_backward(z, target, &grad);
  auto grad_holder = std::make_shared<Tensor>(std::move(grad));
  return g.custom(
      "rnnt_loss", {lattice}, Tensor::scalar(loss),
      [grad_holder](std::span<const double> out_grad, std::span<std::span<double>> input_grads) {
        if (input_grads[0].empty()) return;
        double s = out_grad[0];
        const std::vector<double>& gz = grad_holder->data;
        for (size_t i = 0; i < gz.size(); ++i) input_grads[0][i] += s * gz[i];
      });
}

double rnnt_loss_value(const LogitLattice& lattice, std::span<const int> target) {
  return rnnt_forward_backward(lattice.values, target, nullptr);
}

int64_t alignment_path_count(int64_t frames, int64_t targets) {
  // C(frames - 1 + targets, targets)
  int64_t n = frames - 1 + targets;
  int64_t k = std::min(targets, n - targets);
  double c = 1.0;
  for (int64_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return static_cast<int64_t>(c + 0.5);
}

void save_transducer(const std::string& dir, const TransducerModel& model) {
  save_checkpoint(dir, "transducer", model.cfg.to_json(), model.named_params());
}

TransducerModel load_transducer(const std::string& dir) {
  CheckpointManifest manifest = read_manifest(dir);
  TransducerConfig cfg = TransducerConfig::from_json(manifest.config_json);
  TransducerModel model = TransducerModel::init(cfg, /*seed=*/0);
  load_checkpoint(dir, "transducer", model.named_params());
  return model;
}

BruteLoss rnnt_loss_brute(const LogitLattice& lattice, std::span<const int> target) {
  int64_t frames = lattice.frames();
  int64_t rows = lattice.rows();
  int64_t labels = static_cast<int64_t>(target.size());
  if (rows != labels + 1)
    throw ShapeError(strcat_all("rnnt brute: lattice has ", rows, " rows, target needs ", labels + 1));
  check_target(target, lattice.vocab());
  if (alignment_path_count(frames, labels) > 1'000'000)
    throw DataError("rnnt brute: instance too large to enumerate");

  // Cache blank / emit probabilities per cell.
  std::vector<double> pb(static_cast<size_t>(frames * rows));
  std::vector<double> pe(static_cast<size_t>(frames * rows), 0.0);
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t u = 0; u < rows; ++u) {
      std::vector<double> post = lattice.posterior(t, u);
      pb[static_cast<size_t>(t * rows + u)] = post[static_cast<size_t>(kBlankId)];
      if (u < labels)
        pe[static_cast<size_t>(t * rows + u)] = post[static_cast<size_t>(target[static_cast<size_t>(u)])];
    }

  BruteLoss out;
  double total = 0.0;
  // Explicit DFS over all monotone paths; every path ends with the terminal
  // blank at (frames-1, labels).
  std::function<void(int64_t, int64_t, double)> rec = [&](int64_t t, int64_t u, double acc) {
    if (u < labels) rec(t, u + 1, acc * pe[static_cast<size_t>(t * rows + u)]);
    if (t < frames - 1) {
      rec(t + 1, u, acc * pb[static_cast<size_t>(t * rows + u)]);
    } else if (u == labels) {
      total += acc * pb[static_cast<size_t>(t * rows + u)];
      out.paths += 1;
    }
  };
  rec(0, 0, 1.0);
  out.nll = -std::log(total);
  return out;
}

}  // namespace biaslattice
