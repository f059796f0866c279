// core/src/lstm.cpp

#include "biaslattice/lstm.hpp"

#include <cmath>

namespace biaslattice {

Tensor uniform_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  t.requires_grad = true;
  return t;
}

LstmParams LstmParams::init(int64_t input_dim, int64_t units, Rng& rng) {
  LstmParams p;
  p.input_dim = input_dim;
  p.units = units;
  p.w_ih = uniform_init({input_dim, 4 * units}, input_dim, rng);
  p.w_hh = uniform_init({units, 4 * units}, units, rng);
  p.b_ih = Tensor::zeros({4 * units});
  p.b_hh = Tensor::zeros({4 * units});
  p.b_ih.requires_grad = true;
  p.b_hh.requires_grad = true;
  // Forget gate bias +1 (f is the second gate block).
  for (int64_t i = units; i < 2 * units; ++i) p.b_ih.data[static_cast<size_t>(i)] = 1.0;
  return p;
}

void LstmParams::collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor*>>& out) {
  out.emplace_back(prefix + ".w_ih", &w_ih);
  out.emplace_back(prefix + ".w_hh", &w_hh);
  out.emplace_back(prefix + ".b_ih", &b_ih);
  out.emplace_back(prefix + ".b_hh", &b_hh);
}

int64_t LstmParams::param_count() const {
  return w_ih.numel() + w_hh.numel() + b_ih.numel() + b_hh.numel();
}

LstmState lstm_start(Graph& g, const LstmParams& p) {
  Value z = g.zeros({p.units});
  return {z, z};
}

LstmState lstm_step(Graph& g, const LstmParams& p, const LstmState& s, Value x) {
  Value gates = g.add(g.add(g.matmul(x, g.param(p.w_ih)), g.param(p.b_ih)),
                      g.add(g.matmul(s.h, g.param(p.w_hh)), g.param(p.b_hh)));
  int64_t u = p.units;
  Value i = g.sigmoid(g.slice(gates, 0, 0, u));
  Value f = g.sigmoid(g.slice(gates, 0, u, u));
  Value gg = g.tanh(g.slice(gates, 0, 2 * u, u));
  Value o = g.sigmoid(g.slice(gates, 0, 3 * u, u));
  Value c = g.add(g.mul(f, s.c), g.mul(i, gg));
  Value h = g.mul(o, g.tanh(c));
  return {h, c};
}

std::vector<Value> lstm_run(Graph& g, const LstmParams& p, std::span<const Value> xs) {
  std::vector<Value> out;
  out.reserve(xs.size());
  LstmState s = lstm_start(g, p);
  for (Value x : xs) {
    s = lstm_step(g, p, s, x);
    out.push_back(s.h);
  }
  return out;
}

}  // namespace biaslattice
