#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hedge/metrics.hpp"
#include "hedge/model.hpp"

namespace hedge::train {

struct TrainConfig {
  std::size_t batch_size = 64;
  double lr = 0.1;
  std::size_t epochs = 100;
  std::size_t eval_every = 10;    // dev checkpoint cadence, in epochs
  std::size_t sample_count = 10;  // reporting protocol: mean of this many
  std::size_t sample_start = 400;  // ... starting at this epoch
  std::uint64_t seed = 1;
  bool class_weighting = true;
  // alternative weighting: rescale the static weights by each class's running
  // training error rate, refreshed at every checkpoint
  bool dynamic_class_weights = false;
  bool halve_lr_on_plateau = true;
  std::size_t plateau_patience = 5;  // checkpoints without a new best
  double early_stop_f1 = -1.0;       // stop once dev F1 (x100) reaches this

  void validate() const;
};

struct CheckpointRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_precision = 0.0;  // x100
  double dev_recall = 0.0;     // x100
  double dev_f1 = 0.0;         // x100
  double lr = 0.0;
  double wall_s = 0.0;
};

struct TrainHistory {
  std::vector<CheckpointRecord> records;

  // one JSON object per line; wall_s is measurement, everything else is state
  std::string to_jsonl() const;
  static TrainHistory from_jsonl(const std::string& text);
};

struct TrainResult {
  TrainHistory history;
  bool diverged = false;
  std::string message;
  double best_dev_f1 = -1.0;  // x100
  std::size_t best_epoch = 0;
};

// balanced inverse-frequency: w_c = N / (2 * N_c), so w_c * N_c = N/2 per class
std::pair<double, double> class_weights(std::size_t n_certain, std::size_t n_uncertain);

// -(w1*y*ln p + w0*(1-y)*ln(1-p)) with p clamped to [1e-7, 1-1e-7]
double weighted_bce(double p, int y, std::pair<double, double> w);

// p <- p - lr * g for every entry, then zero the grads. The frozen word table
// never appears in `params`; the POS PAD row is asserted grad-free.
void sgd_step(nn::ParamList& params, double lr);

// Seeded-shuffle epochs over fixed-size batches (final partial batch kept),
// gradient accumulated per batch, dev metrics every eval_every epochs, best
// checkpoint by dev F1 restored into the model on return.
TrainResult train(model::Model& m, const std::vector<corpus::Encoded>& train_set,
                  const std::vector<corpus::Encoded>& dev_set, const TrainConfig& cfg);

// mean dev F1 at epochs start, start+every, ..., start+(n-1)*every
double sample_mean_f1(const TrainHistory& history, std::size_t start,
                      std::size_t every, std::size_t n);

}  // namespace hedge::train
