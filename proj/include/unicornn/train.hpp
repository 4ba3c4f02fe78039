#pragma once

#include <cstdint>
#include <vector>

#include "unicornn/dataset.hpp"
#include "unicornn/model.hpp"
#include "unicornn/optim.hpp"

namespace unicornn {

struct TrainConfig {
  int epochs = 1;
  double lr = 1e-3;
  int lr_drop_epoch = 0;        // 0 disables the drop
  double lr_drop_factor = 10.0;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double valid_fraction = 0.0;  // used by split_dataset, not by fit itself
  double clip_norm = 0.0;       // 0 keeps clipping off
  int threads = 1;
  bool sgd = false;             // Adam unless explicitly asked otherwise
  bool freeze_recurrent = false;

  void validate() const {
    require(epochs >= 1, "TrainConfig: epochs must be >= 1");
    require(lr > 0.0, "TrainConfig: lr must be positive");
    require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
    require(lr_drop_factor > 0.0, "TrainConfig: lr_drop_factor must be positive");
    require(valid_fraction >= 0.0 && valid_fraction < 1.0,
            "TrainConfig: valid fraction must be in [0,1)");
  }
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;    // mean per-sequence loss over the epoch
  double valid_metric = 0.0;  // accuracy (classification) or NRMSE (regression)
  double lr = 0.0;            // rate in effect during the epoch
  double wall_time_s = 0.0;
};

struct FitResult {
  Model best;
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  bool diverged = false;
};

// Mean per-sequence loss and the chosen validation metric over a dataset,
// evaluated in inference mode at the given batch size.
struct EvalSummary {
  double mean_loss = 0.0;
  double metric = 0.0;  // accuracy or pooled NRMSE
};

EvalSummary evaluate(const Model& model, const SequenceDataset& data,
                     int batch_size, int threads = 1);

// Mini-batch training with per-epoch seeded reshuffle, an optional single
// learning-rate drop, and validation-based selection (higher accuracy wins
// for classification, lower NRMSE for regression; ties go to the earlier
// epoch). On a non-finite loss or parameter the loop stops and returns the
// parameters as of the last completed finite epoch, flagged diverged.
FitResult fit(const Model& initial, const SequenceDataset& train_data,
              const SequenceDataset& valid_data, const TrainConfig& tcfg);

// Deterministic shuffle split: the last `fraction` of a seeded permutation
// becomes the validation set.
std::pair<SequenceDataset, SequenceDataset> split_dataset(
    const SequenceDataset& data, double fraction, std::uint64_t seed);

}  // namespace unicornn
