#pragma once

// Model and training configuration. Field defaults are the reference setup;
// everything is overridable through the config file (see configfile.hpp).

#include <cstdint>
#include <string>

#include "whar/base.hpp"

namespace whar {

struct ModelConfig {
  // input geometry
  int64_t sensors = 6;    // N
  int64_t variables = 3;  // M per sensor
  int64_t length = 100;   // L samples per window
  int64_t classes = 12;

  struct {
    int64_t kernel = 4;
    int64_t stride = 4;
    int64_t channels = 32;  // D
    bool shared = false;    // share embedding filters across sensors
  } mfe;

  struct {
    float p = 0.5f;
    float alpha = 0.1f;
    std::string axis = "temporal";  // or "channel"
    bool pre_local = true;          // site 1: before local extraction
    bool pre_global = true;         // site 2: before global aggregation
  } mom;

  struct {
    int64_t kernel = 5;  // odd, "same" padded
    std::string activation = "gelu";
  } ltfe;

  struct {
    std::string activation = "gelu";
    bool mix_sensors = false;  // group pointwise fusion by variable only
  } ccf;

  struct {
    int64_t r = 4;
    int64_t k = 2;
    std::string kernel = "3x3";  // "1x3" for the pure-temporal variant
  } cfb;

  struct {
    int64_t state_size = 16;
    int64_t conv_width = 4;
  } gta;

  struct {
    int64_t d_k = 64;
    bool scaled = false;  // 1/sqrt(d_k) score scaling
  } csi;

  struct {
    std::string variable = "cfb";  // or "none"
    std::string sensor = "cfb";    // or "attention"
  } fusion;

  // Embedded sequence length after the strided embedding.
  int64_t embed_steps() const {
    return (length - mfe.kernel) / mfe.stride + 1;
  }
  int64_t model_width() const { return sensors * mfe.channels; }  // E
  int64_t cfb_squeezed(int64_t C) const { return C / cfb.r; }
};

// Named ablation presets over the two feature flags.
enum class Ablation { baseline, with_mom, with_cfb, full };

const char* ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& s);
void apply_ablation(ModelConfig& cfg, Ablation a);

// Parsed "KhxKw" kernel spec, e.g. "3x3" or "1x3".
struct Kernel2d {
  int64_t h = 3, w = 3;
};
Kernel2d parse_kernel2d(const std::string& s);

// Rejects inconsistent configurations with a message naming the field.
// All structural problems surface here, at build time, not mid-forward.
void validate(const ModelConfig& cfg);

struct TrainConfig {
  float lr = 1e-4f;
  float weight_decay = 1e-5f;
  int64_t batch = 32;
  int64_t max_epochs = 100;
  int64_t patience = 15;
  uint64_t seed = 1;
};

void validate(const TrainConfig& cfg);

}  // namespace whar
