// core/include/biaslattice/train.hpp
//
// Adam with bias correction and global-norm clipping, plus the three
// training drivers: pretraining the base transducer, adapter training with
// the base frozen bit-exactly (checksum asserted every epoch), and full
// fine-tuning for the catastrophic-forgetting comparison. Early stopping on
// dev loss with best-params restore.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "biaslattice/adapters.hpp"
#include "biaslattice/data.hpp"
#include "biaslattice/transducer.hpp"

namespace biaslattice {

enum class TrainMode { kPretrain, kAdapter, kFullFinetune };
const char* train_mode_name(TrainMode m);
std::optional<TrainMode> train_mode_from_name(const std::string& name);

struct TrainConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 8;
  double mix_ratio_m = 1.5;
  int max_epochs = 40;
  int patience = 5;
  double clip_norm = 5.0;
  TrainMode mode = TrainMode::kPretrain;
  int catalog_k = 16;  // per-utterance training catalog size (cap kMaxCatalogSize)
  uint64_t seed = 1;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t step = 0;
  int skipped = 0;  // steps dropped due to non-finite gradients

  static AdamState init(const std::vector<Tensor*>& params);
};

// One Adam update over `params` using their .grad fields: global-norm clip,
// bias-corrected moments, then zero the grads. Params whose requires_grad is
// false are left untouched (frozen mask).
void adam_step(const std::vector<Tensor*>& params, AdamState& state, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double lr = 0.0;
  std::string frozen_checksum;  // adapter mode only
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double initial_dev_loss = 0.0;  // dev loss before any update (safe-start anchor)
  double best_dev_loss = 0.0;
  int best_epoch = -1;
  int stopped_epoch = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Mean rnnt loss of the base model over a set (no adapters).
double dataset_loss(const TransducerModel& model, const std::vector<Utterance>& utts);

// Mean rnnt loss of the adapted model with fixed per-utterance catalogs.
double dataset_loss_adapted(const TransducerModel& model, const ContextualAdapters& adapters,
                            const std::vector<Utterance>& utts, const std::vector<Catalog>& catalogs,
                            const Vocab& vocab);

// Dev catalogs are fixed across epochs so dev losses are comparable.
std::vector<Catalog> dev_catalogs(const std::vector<Utterance>& dev, const Lexicons& lexicons, int k,
                                  uint64_t seed);

TrainResult pretrain(const TrainConfig& cfg, TransducerModel& model, const std::vector<Utterance>& train,
                     const std::vector<Utterance>& dev, const EpochCallback& on_epoch = {});

// Base params are frozen; asserts the base checksum is unchanged after every
// epoch and throws Error on drift.
TrainResult train_adapters(const TrainConfig& cfg, const TransducerModel& model,
                           ContextualAdapters& adapters, const Corpus& corpus,
                           const EpochCallback& on_epoch = {});

// All parameters trainable; identical pipeline otherwise.
TrainResult full_finetune(const TrainConfig& cfg, TransducerModel& model, ContextualAdapters& adapters,
                          const Corpus& corpus, const EpochCallback& on_epoch = {});

}  // namespace biaslattice
