#pragma once

#include <string>
#include <vector>

#include "whar/adamw.hpp"
#include "whar/configfile.hpp"
#include "whar/dataset.hpp"
#include "whar/network.hpp"

namespace whar {

// Self-contained training snapshot: the resolved config text, every
// parameter and running-stat buffer by name, optimizer moments, the
// normalization stats the run trained under, and progress counters.
// Serialization is canonical, so save, load and save again emits the same
// bytes, and two identical runs produce identical files.
struct Checkpoint {
  std::string cfg_text;
  int64_t epoch = 0;
  int64_t best_epoch = 0;
  double best_metric = 0;
  int64_t opt_steps = 0;
  std::vector<std::pair<std::string, std::vector<float>>> params, bufs;
  std::vector<std::vector<int64_t>> param_shapes, buf_shapes;
  std::vector<std::vector<float>> opt_m, opt_v;
  NormStats norm;

  FullConfig config() const;
};

Checkpoint snapshot(const FullConfig& cfg, NetworkT<float>& net,
                    const AdamW& opt, const NormStats& norm, int64_t epoch,
                    int64_t best_epoch, double best_metric);

// Writes stored values through the live registry handles so the layer
// tensors the network actually reads are the ones updated. Names and shapes
// must match the network exactly; anything else fails loudly.
void restore(const Checkpoint& ck, NetworkT<float>& net, AdamW& opt,
             NormStats& norm);

std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(const std::string& bytes,
                            const std::string& origin);
void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace whar
