#pragma once

// Closed-form cost model for the network: exact trainable-parameter counts
// and per-stage FLOP estimates for a batch-1 forward pass.
//
// Counting conventions (shared with the tests' counting interpreter):
//   conv/linear      one MAC per (output element, fan-in tap); bias one
//                    add per output element
//   batch norm       2 per element (scale, shift)
//   activation       1 per element
//   elementwise      1 per element (adds, muls, residuals)
//   mean over M      M per output element
//   softmax          4 per element (max, exp, sum, divide passes)
//   selective scan   8*S + 2 per (channel, step): discretize, state update,
//                    readout, skip
// MAC terms are exact and unit-tested against an instruction-counting oracle;
// the linear terms are bookkeeping and reported separately as `extra`.

#include <cstdint>
#include <string>
#include <vector>

#include "whar/config.hpp"

namespace whar {

struct StageCost {
  std::string name;
  int64_t macs = 0;   // multiply-accumulates in matrix/conv contractions
  int64_t extra = 0;  // everything linear: bias, norm, activation, residual
  int64_t total() const { return macs + extra; }
};

struct CfbCost {
  int64_t squeeze = 0, recurse = 0, fusion = 0, extra = 0;
  int64_t macs() const { return squeeze + recurse + fusion; }
  int64_t total() const { return macs() + extra; }
};

// One fusion block on (1, C, F, L).
inline CfbCost cfb_flops(int64_t C, int64_t r, int64_t K, Kernel2d k,
                         int64_t F, int64_t L) {
  CfbCost c;
  const int64_t Cm = C / r;
  const int64_t plane = F * L;
  c.squeeze = C * Cm * plane;
  c.recurse = K * Cm * k.h * k.w * plane;
  c.fusion = (K + 1) * Cm * C * plane;
  // squeeze: bias + BN + act; each step: bias + act; fusion: bias + BN + act;
  // residual add
  c.extra = Cm * plane * 4 + K * Cm * plane * 2 + C * plane * 4 + C * plane;
  return c;
}

struct CsiCost {
  int64_t proj = 0, score = 0, mix = 0, out = 0, extra = 0;
  int64_t macs() const { return proj + score + mix + out; }
  int64_t total() const { return macs() + extra; }
};

// One attention pass over N tokens of width Dtok.
inline CsiCost csi_flops(int64_t N, int64_t Dtok, int64_t dk) {
  CsiCost c;
  c.proj = 3 * N * Dtok * dk;
  c.score = N * N * dk;
  c.mix = N * N * dk;
  c.out = N * dk * Dtok;
  c.extra = 4 * N * N   // softmax over the score matrix
            + N * Dtok; // residual add
  return c;
}

// The gated scan block on (1, E, T) with conv width W and state size S.
inline StageCost scan_flops(int64_t E, int64_t S, int64_t T, int64_t W) {
  StageCost c{"scan", 0, 0};
  c.macs = 5 * E * E * T    // in1, in2, step, gate, out pointwise maps
           + 2 * E * W * T  // both branch convs
           + 2 * S * E * T; // B and C projections
  c.extra = 7 * E * T       // five conv biases, two branch-conv biases
            + E * T         // softplus on the step size
            + (8 * S + 2) * E * T  // the scan itself
            + E * T         // silu
            + E * T         // gate multiply
            + E * T;        // residual
  return c;
}

// Exact trainable-scalar count, mirrored by the registry-walk count.
inline int64_t param_count(const ModelConfig& cfg) {
  const int64_t N = cfg.sensors, M = cfg.variables, D = cfg.mfe.channels;
  const int64_t P = cfg.mfe.kernel, T = cfg.embed_steps(), E = N * D;
  const int64_t S = cfg.gta.state_size, W = cfg.gta.conv_width;
  int64_t total = 0;

  const int64_t banks = cfg.mfe.shared ? M : N * M;
  total += banks * D * P + banks * D;                       // embed
  total += M * D * cfg.ltfe.kernel + M * D;                 // local
  total += cfg.ccf.mix_sensors ? (M * N * D) * (N * D) + N * M * D
                               : (N * M * D) * D + N * M * D;  // channel mix
  total += D * D + D;                                       // channel refine

  auto cfb_params = [&](int64_t C) {
    const int64_t Cm = C / cfg.cfb.r;
    auto k = parse_kernel2d(cfg.cfb.kernel);
    return Cm * C + Cm + 2 * Cm                    // squeeze conv + BN
           + cfg.cfb.k * (Cm * k.h * k.w + Cm)     // cascade steps
           + C * (cfg.cfb.k + 1) * Cm + C + 2 * C; // fusion conv + BN
  };
  if (cfg.fusion.variable == "cfb") total += cfb_params(D);

  total += 5 * (E * E + E)  // in1, in2, step, gate, out
           + 2 * (E * W + E)  // branch convs
           + 2 * S * E        // B, C projections
           + E * S            // log-A
           + E;               // skip
  if (cfg.fusion.sensor == "cfb")
    total += cfb_params(D);
  else
    total += 4 * cfg.csi.d_k * (D * T);  // q, k, v, out maps

  total += cfg.classes * (N * D * T) + cfg.classes;  // head
  return total;
}

struct CostReport {
  std::vector<StageCost> stages;
  int64_t params = 0;
  int64_t total_macs() const {
    int64_t n = 0;
    for (auto& s : stages) n += s.macs;
    return n;
  }
  int64_t total_flops() const {
    int64_t n = 0;
    for (auto& s : stages) n += s.total();
    return n;
  }
};

// Batch-1 forward cost, stage by stage.
inline CostReport analyze(const ModelConfig& cfg) {
  validate(cfg);
  const int64_t N = cfg.sensors, M = cfg.variables, D = cfg.mfe.channels;
  const int64_t T = cfg.embed_steps(), E = N * D;
  const auto k2 = parse_kernel2d(cfg.cfb.kernel);
  CostReport r;
  r.params = param_count(cfg);

  r.stages.push_back({"embed", N * M * D * T * cfg.mfe.kernel, N * M * D * T});
  r.stages.push_back(
      {"local", N * M * D * T * cfg.ltfe.kernel, N * M * D * T * 2});
  {
    const int64_t fan = cfg.ccf.mix_sensors ? N * D : D;
    StageCost s{"fuse_ch", 0, 0};
    s.macs = N * M * D * T * fan + N * M * D * T * D;
    s.extra = N * M * D * T * 4;  // two biases, two activations
    r.stages.push_back(s);
  }
  if (cfg.fusion.variable == "cfb") {
    auto c = cfb_flops(D, cfg.cfb.r, cfg.cfb.k, k2, M, T);
    r.stages.push_back({"fuse_var", N * c.macs(), N * c.extra});
  }
  r.stages.push_back({"pool", 0, E * M * T});
  r.stages.push_back(scan_flops(E, cfg.gta.state_size, T, cfg.gta.conv_width));
  if (cfg.fusion.sensor == "cfb") {
    auto c = cfb_flops(D, cfg.cfb.r, cfg.cfb.k, k2, N, T);
    r.stages.push_back({"fuse_sen", c.macs(), c.extra});
  } else {
    auto c = csi_flops(N, D * T, cfg.csi.d_k);
    r.stages.push_back({"fuse_sen", c.macs(), c.extra});
  }
  r.stages.push_back(
      {"head", cfg.classes * E * T, cfg.classes});
  return r;
}

}  // namespace whar
