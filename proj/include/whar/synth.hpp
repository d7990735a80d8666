#pragma once

#include "whar/dataset.hpp"

namespace whar {

// Synthetic activity windows. Every class is a fixed mixture of sinusoids on
// a shared carrier frequency; class identity lives in per-channel resting
// levels, amplitude profiles, harmonic mixes and cross-channel phase
// relationships. Samples vary by a shared phase jitter and additive noise.
// A "style" is a pure moment perturbation: the whole window is scaled and
// offset, which is exactly the kind of shift the moment-morph augmentation
// targets, and which spares only the phase-relationship features.
//
// Train and val draw from `styles` mildly varied in-distribution styles.
// With `shifted_test` the test split comes from one held-out style with
// `test_amp` scale and `test_offset` shift; otherwise it cycles the training
// styles like the other splits.
struct GenConfig {
  int64_t classes = 6;
  int64_t sensors = 4;
  int64_t variables = 3;
  int64_t length = 128;
  int64_t train_per_class = 40;
  int64_t val_per_class = 12;
  int64_t test_per_class = 12;
  int64_t styles = 1;
  double noise = 0.2;
  double jitter = 2.0;
  double test_amp = 2.0;
  double test_offset = 0.5;
  bool shifted_test = true;
  uint64_t seed = 1;
};

struct SynthSplits {
  Dataset train, val, test;
};

SynthSplits generate_synthetic(const GenConfig& g);

}  // namespace whar
