// core/include/biaslattice/lstm.hpp
//
// LSTM cell on the tape. Weight layout is input-major ({in, 4*units}) so a
// step is two vector-matrix products; gate order within the fused dimension
// is i, f, g, o. Forget-gate bias starts at +1.

#pragma once

#include <string>
#include <vector>

#include "biaslattice/graph.hpp"
#include "biaslattice/rng.hpp"
#include "biaslattice/tensor.hpp"

namespace biaslattice {

struct LstmParams {
  Tensor w_ih;  // {input_dim, 4*units}
  Tensor w_hh;  // {units, 4*units}
  Tensor b_ih;  // {4*units}
  Tensor b_hh;  // {4*units}
  int64_t input_dim = 0;
  int64_t units = 0;

  static LstmParams init(int64_t input_dim, int64_t units, Rng& rng);
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor*>>& out);
  int64_t param_count() const;
};

struct LstmState {
  Value h;
  Value c;
};

LstmState lstm_start(Graph& g, const LstmParams& p);
LstmState lstm_step(Graph& g, const LstmParams& p, const LstmState& s, Value x);

// Runs the full sequence, returning the h output per step.
std::vector<Value> lstm_run(Graph& g, const LstmParams& p, std::span<const Value> xs);

// Scaled-uniform U(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for a {fan_in, out}
// weight matrix; also used for embeddings and projections.
Tensor uniform_init(std::vector<int64_t> shape, int64_t fan_in, Rng& rng);

}  // namespace biaslattice
