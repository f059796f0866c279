// core/include/biaslattice/transducer.hpp
//
// The pretrained neural transducer: unidirectional LSTM encoder with a
// time-reduction layer, LSTM prediction network over emitted word-pieces,
// additive join with tanh activation, and the transducer loss summed over
// all monotonic alignments (forward DP in log space, analytic gradient via
// forward-backward occupancies). Blank id is 0 and is never consumed by the
// prediction network.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "biaslattice/checkpoint.hpp"
#include "biaslattice/graph.hpp"
#include "biaslattice/lstm.hpp"
#include "biaslattice/rng.hpp"

namespace biaslattice {

struct TransducerConfig {
  int64_t feature_dim = 8;
  int enc_layers = 2;
  int64_t enc_units = 32;
  int time_reduction_after_layer = 1;  // 1-based layer index; 0 disables
  int time_reduction_factor = 2;
  int pred_layers = 1;
  int64_t pred_units = 32;
  int64_t joint_dim = 32;
  int64_t vocab_size = 64;
  // Joint activation is tanh.

  void validate() const;
  std::string to_json() const;
  static TransducerConfig from_json(const std::string& text);
};

struct TransducerModel {
  TransducerConfig cfg;
  std::vector<LstmParams> encoder;
  Tensor enc_proj_w;   // {enc_units, joint_dim}
  Tensor enc_proj_b;   // {joint_dim}
  Tensor embed;        // {vocab_size, pred_units}
  Tensor start_embed;  // {pred_units}; learned start-of-history input
  std::vector<LstmParams> prediction;
  Tensor pred_proj_w;  // {pred_units, joint_dim}
  Tensor pred_proj_b;  // {joint_dim}
  Tensor joint_w;      // {joint_dim, vocab_size}
  Tensor joint_b;      // {vocab_size}

  static TransducerModel init(const TransducerConfig& cfg, uint64_t seed);

  NamedTensors named_params();
  NamedTensors named_params() const;
  int64_t param_count() const;
  void set_requires_grad(bool on);
};

// Closed-form parameter count for a config; the census test pins the model
// against this.
int64_t analytic_param_count(const TransducerConfig& cfg);

// Post-reduction frame count: ceil(T / factor), last frame duplicated to
// fill the final group on odd lengths.
int64_t reduced_frames(int64_t t, int factor);

// Encoder forward: T x feature_dim -> T' rows of joint_dim values.
std::vector<Value> encode_audio(Graph& g, const TransducerModel& m, const Tensor& features);

// Prediction forward over a blank-free history: U tokens -> U+1 rows, row 0
// conditioned only on the learned start embedding.
std::vector<Value> predict(Graph& g, const TransducerModel& m, std::span<const int> history);

// Incremental prediction state for decoding.
struct PredState {
  std::vector<LstmState> layers;
  Value out;  // projected row, {joint_dim}
};
PredState pred_start(Graph& g, const TransducerModel& m);
PredState pred_step(Graph& g, const TransducerModel& m, const PredState& s, int token);

// Optional per-cell hook applied to the pre-activation join vector
// j_{t,u} = enc_row + pred_row before tanh and the output layer (the Joint
// Query adapter plugs in here).
using JointHook = std::function<Value(Graph&, Value)>;

// One lattice cell worth of logits: W_o tanh(e + p) + b_o, shape {V}.
Value join_cell(Graph& g, const TransducerModel& m, Value enc_row, Value pred_row,
                const JointHook* hook = nullptr);

// Full lattice, shape {T', U+1, V}.
Value join(Graph& g, const TransducerModel& m, std::span<const Value> enc_rows,
           std::span<const Value> pred_rows, const JointHook* hook = nullptr);

struct LogitLattice {
  Tensor values;  // {T', U+1, V}
  int64_t frames() const { return values.dim(0); }
  int64_t rows() const { return values.dim(1); }  // U+1
  int64_t vocab() const { return values.dim(2); }
  // softmax(z_{t,u}); sums to 1 within 1e-12.
  std::vector<double> posterior(int64_t t, int64_t u) const;
  std::vector<double> log_posterior(int64_t t, int64_t u) const;
};

LogitLattice materialize_lattice(const Graph& g, Value lattice);

// Negative log-likelihood over all monotonic alignments; differentiable
// (custom tape node with the forward-backward gradient).
Value rnnt_loss(Graph& g, Value lattice, std::span<const int> target);

// Plain-tensor loss (no tape) for inference-side evaluation.
double rnnt_loss_value(const LogitLattice& lattice, std::span<const int> target);

struct BruteLoss {
  double nll = 0.0;
  int64_t paths = 0;
};
// Explicit enumeration of every alignment path in probability space.
// Refuses instances with more than ~1e6 paths.
BruteLoss rnnt_loss_brute(const LogitLattice& lattice, std::span<const int> target);

int64_t alignment_path_count(int64_t frames, int64_t targets);

// Checkpoint directory I/O (manifest.json + params.bin, kind "transducer").
void save_transducer(const std::string& dir, const TransducerModel& model);
TransducerModel load_transducer(const std::string& dir);

}  // namespace biaslattice
