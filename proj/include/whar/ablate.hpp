#pragma once

#include "whar/bench.hpp"
#include "whar/trainer.hpp"

namespace whar {

// One table row of the four-way feature study. Quality numbers are medians
// over the repeated seeds; size, cost and latency depend only on the config.
struct AblationRow {
  Ablation ab = Ablation::baseline;
  std::string config_text;
  std::vector<uint64_t> seeds;
  std::vector<double> acc_runs, f1_runs;
  double test_acc = 0;
  double test_f1 = 0;
  int64_t params = 0;
  int64_t flops = 0;
  double latency_us = 0;
};

double median(std::vector<double> v);

// Trains {baseline, +mom, +cfb, full} on the same splits with the same seed
// set (base seed, base seed + 1, ...) and scores each on the held-out test
// split. Rows land in preset order.
std::vector<AblationRow> run_ablation(const FullConfig& base,
                                      const SynthSplits& data,
                                      int64_t repeats);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace whar
