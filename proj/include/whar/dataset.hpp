#pragma once

#include <string>
#include <vector>

#include "whar/rng.hpp"
#include "whar/tensor.hpp"

namespace whar {

// Windowed multi-sensor recordings. x is laid out (samples, N, M, L) row
// major, one float per reading, labels one class id per window.
struct Dataset {
  int64_t samples = 0;
  int64_t sensors = 0;
  int64_t variables = 0;
  int64_t length = 0;
  int64_t classes = 0;
  std::vector<float> x;
  std::vector<int> labels;

  int64_t window() const { return sensors * variables * length; }
  float* sample(int64_t i) { return x.data() + i * window(); }
  const float* sample(int64_t i) const { return x.data() + i * window(); }
};

// Binary container: "WHAR" magic, a format version, five u32 counts
// (samples, sensors, variables, length, classes), then the float payload and
// one u32 label per sample. Everything little-endian.
std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& bytes, const std::string& origin);
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

// Per-(sensor, variable) extrema, taken from the training split only.
struct NormStats {
  int64_t sensors = 0;
  int64_t variables = 0;
  std::vector<float> lo, hi;
};

NormStats compute_stats(const Dataset& ds);

// Affine map sending [lo, hi] to [-1, 1] per channel. Values outside the
// training range clamp to the endpoints; a constant channel (hi == lo) maps
// to zero everywhere.
void normalize(Dataset& ds, const NormStats& st);

struct Batch {
  TensorT<float> x;
  std::vector<int> labels;
};

Batch make_batch(const Dataset& ds, const std::vector<int64_t>& idx);

// Index blocks covering [0, n) exactly once, `size` apiece with a short
// tail block. Pass an Rng to visit samples in a seeded random order.
std::vector<std::vector<int64_t>> epoch_batches(int64_t n, int64_t size,
                                                Rng* shuffle = nullptr);

}  // namespace whar
