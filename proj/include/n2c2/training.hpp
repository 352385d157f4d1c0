#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "n2c2/adaptive.hpp"
#include "n2c2/datastore.hpp"
#include "n2c2/model.hpp"
#include "n2c2/retrieval.hpp"
#include "n2c2/rng.hpp"
#include "n2c2/shaping.hpp"

namespace n2c2 {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moments per parameter tensor plus the shared step count.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update over a list of parameter tensors. The state
// is sized on first use; later calls must pass the same shapes.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state,
               const AdamConfig& cfg);

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;

  std::size_t shaped_dim = 32;     // Z
  bool shape = true;               // false: retrieve with raw embeddings
  bool freeze_cd = false;
  bool freeze_dwe = false;
  bool normalize_distances = false;
  double label_smoothing = 0.0;    // stage-2 target smoothing
  std::size_t num_bins = 10;       // for the dev ECE column of the log

  AdamConfig adam() const { return {lr, adam_beta1, adam_beta2, adam_eps}; }
  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::string stage;  // "shaping" or "cd_dwe"
  double train_loss = 0.0;
  double dev_acc = 0.0;
  double dev_ece = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// "epoch,stage,train_loss,dev_acc,dev_ece" values, comma separated.
std::string format_epoch_log(const EpochLog& log);

// Stage 1: fits the shaping layer on update-half queries against the
// retrieval half, re-keying the datastore with the current layer before every
// step. `records` holds the train split (and the dev split used for
// checkpoint selection). The layer with the best dev kNN accuracy wins,
// counting the initialization as epoch 0; ties go to the earliest epoch.
ShapingLayer train_shaping(const std::vector<EmbeddingRecord>& records, const LabelSpace& labels,
                           const SplitPlan& split, const TrainConfig& cfg,
                           const RetrievalConfig& rcfg, Rng& rng,
                           const EpochCallback& on_epoch = {});

struct PreparedRecord {
  std::vector<PreparedView> views;
  Distribution target;  // gold label, possibly smoothed
  std::size_t gold = 0;
};

PreparedRecord prepare_record(const EmbeddingRecord& record, const N2C2Model& model,
                              const Datastore& store, double label_smoothing = 0.0);

struct Stage2Gradients {
  ConfidenceModule confidence;
  DweNetwork dwe;
};

struct Stage2Result {
  double loss = 0.0;
  Stage2Gradients grads;
};

// Mean cross-entropy of the combined, view-averaged distribution against
// each record's target, with analytic gradients for W1..W4 and the DWE.
Stage2Result stage2_loss(const N2C2Model& model, std::span<const PreparedRecord> batch);

// Stage 2: joint training of the confidence module and the DWE network with
// the shaping layer frozen. `model` supplies the frozen parts and the
// initial parameters; returns the best-dev-accuracy checkpoint.
N2C2Model train_cd_dwe(const std::vector<EmbeddingRecord>& records, const LabelSpace& labels,
                       N2C2Model model, const TrainConfig& cfg, Rng& rng,
                       const EpochCallback& on_epoch = {});

// Split, stage 1, initialization and stage 2 from a single seed.
N2C2Model train_n2c2(const std::vector<EmbeddingRecord>& records, const LabelSpace& labels,
                     const TrainConfig& cfg, const RetrievalConfig& rcfg,
                     const EpochCallback& on_epoch = {});

// Model with freshly initialized CD and DWE around `shaping` (may be empty).
N2C2Model initial_model(const LabelSpace& labels, std::size_t input_dim,
                        std::optional<ShapingLayer> shaping, const SplitPlan& split,
                        std::size_t retrieval_entries, const RetrievalConfig& rcfg,
                        std::uint64_t seed, Rng& rng);

}  // namespace n2c2
