#pragma once

#include <string>
#include <vector>

#include "whar/checkpoint.hpp"
#include "whar/metrics.hpp"

namespace whar {

struct EpochRow {
  int64_t epoch = 0;
  double train_loss = 0;
  double val_acc = 0;
  double val_f1 = 0;
  double seconds = 0;
};

// Header plus one row per epoch. The seconds column is wall time and is the
// one column two otherwise identical runs may disagree on.
std::string epoch_csv(const std::vector<EpochRow>& log);

struct TrainResult {
  std::vector<EpochRow> log;
  int64_t epochs_run = 0;
  int64_t best_epoch = 0;
  double best_f1 = 0;
  bool aborted = false;
  std::string abort_reason;
  Checkpoint best;
};

// Full optimization loop: seeded init, per-epoch shuffle and augmentation
// streams derived from (seed, purpose, epoch), early stopping on validation
// macro-F1, best/last checkpoints and an epoch CSV in out_dir (pass "" to
// keep everything in memory). Datasets come in raw; the run computes min/max
// stats on the training split and carries them in its checkpoints.
//
// A non-finite loss or a poisoned gradient aborts the run; checkpoints on
// disk stay at the last good epoch.
TrainResult train(const FullConfig& cfg, const Dataset& raw_train,
                  const Dataset& raw_val, const std::string& out_dir,
                  const Checkpoint* resume = nullptr);

// Errors out unless the dataset's per-sample geometry and class count match
// what the model was configured for.
void check_dataset_fits(const Dataset& ds, const ModelConfig& m,
                        const char* which);

// Class predictions for a normalized dataset, eval mode, fixed batch size.
std::vector<int> predict(NetworkT<float>& net, const Dataset& normalized,
                         int64_t batch);

// predict() plus scoring against the dataset labels.
Metrics evaluate(NetworkT<float>& net, const Dataset& normalized,
                 int64_t batch);

}  // namespace whar
