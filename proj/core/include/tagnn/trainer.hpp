#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tagnn/adam.hpp"
#include "tagnn/data.hpp"
#include "tagnn/metrics.hpp"
#include "tagnn/model.hpp"

namespace tagnn {

/// Training hyperparameters. Defaults mirror the reported setup: hidden size
/// 100, batch 100, Adam at 1e-3 decayed by 0.1 every 3 epochs, l2 1e-5.
struct TrainConfig {
  int d = 100;
  int batch_size = 100;
  double lr0 = 0.001;
  double decay_factor = 0.1;
  int decay_every = 3;
  double l2 = 1e-5;
  int max_epochs = 30;
  int patience = 10;
  uint64_t seed = 0;
  Variant variant = Variant::full;
  LossMode loss_mode = LossMode::categorical;
  int ggnn_steps = 1;
  int k = 20;                // validation metric cutoff (clamped to m on tiny sets)
  bool select_by_mrr = true; // false selects by hit rate instead
};

/// Raises a config error on any out-of-range field.
void validate_config(const TrainConfig& cfg);

/// Staged decay: lr0 * decay_factor^floor(epoch / decay_every).
double lr_at(int epoch, const TrainConfig& cfg);

/// Best-metric tracker implementing the stopping rule: stop after `patience`
/// consecutive observations without strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {
    if (patience < 1) raise(ErrorKind::config, "patience must be >= 1");
  }

  /// Feeds one epoch's validation metric; returns true when it improved.
  bool observe(double metric) {
    ++seen_;
    if (metric > best_) {
      best_ = metric;
      best_epoch_ = seen_ - 1;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  int seen_ = 0;
  int stale_ = 0;
  int best_epoch_ = -1;
  double best_ = -1.0;  // metrics are percentages >= 0, so any first value improves
};

struct EpochStats {
  double mean_loss = 0.0;  // mean example loss across the epoch
  double grad_norm = 0.0;  // mean per-batch global gradient L2 norm
  int batches = 0;
};

/// Runs one optimization pass: for each batch, a shared-tape forward over its
/// examples, one backward, and one Adam step on the mean loss. Parameters
/// change at batch boundaries only. A non-finite batch loss aborts the epoch
/// with a numeric error naming the batch.
EpochStats train_epoch(ModelParams& params, const std::vector<TrainExample>& examples,
                       const std::vector<std::vector<int>>& batches, AdamState& opt,
                       const TrainConfig& cfg, double lr);

/// Ranks all real items for each example and aggregates hit rate and mean
/// reciprocal rank at cutoff k.
Metrics evaluate_examples(const ModelParams& params, const std::vector<TrainExample>& examples,
                          int k, int ggnn_steps);

/// Seeded validation carve-out over n example indices: returns (train,
/// validation) index lists. Validation holds 10% (at least one example when
/// n > 1); the two lists are disjoint and cover [0, n) exactly.
std::pair<std::vector<int>, std::vector<int>> validation_split(size_t n, uint64_t seed);

struct TrainLogLine {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_precision = 0.0;
  double val_mrr = 0.0;
  bool improved = false;
};

struct FitResult {
  ModelParams best_params;
  int best_epoch = -1;
  double best_metric = 0.0;  // selection metric, percentage
  int epochs_run = 0;
  std::vector<TrainLogLine> log;
  size_t train_examples = 0;
  size_t val_examples = 0;
};

/// Full training run: a seeded 90/10 train/validation split, per-epoch
/// optimization and validation, best-checkpoint tracking by the selection
/// metric, and early stopping.
FitResult fit(const std::vector<TrainExample>& examples, int item_count, const TrainConfig& cfg,
              const std::function<void(const TrainLogLine&)>& on_epoch = {});

}  // namespace tagnn
