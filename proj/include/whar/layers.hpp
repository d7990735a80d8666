#pragma once

// Embedding and local-stage layers: per-variable strided embedding, moment
// morphing, depthwise temporal extraction, and cross-channel fusion.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "whar/config.hpp"
#include "whar/ops.hpp"
#include "whar/params.hpp"
#include "whar/tape.hpp"

namespace whar {

enum class Act { gelu, silu };

inline Act act_from_name(const std::string& s) {
  if (s == "gelu") return Act::gelu;
  if (s == "silu") return Act::silu;
  fail("unknown activation: " + s);
}

template <class T>
TensorT<T> apply_act(const TensorT<T>& x, Act a) {
  return a == Act::gelu ? ops::gelu(x) : ops::silu(x);
}

// Per-variable strided embedding. Each of the N*M input variables gets its
// own bank of D filters (one bank per variable when shared across sensors).
// Input (B, N, M, L) -> output (B, N, M, D, T) with T = (L - P) / S + 1.
template <class T>
struct MfeT {
  int64_t N, M, P, S, D;
  bool shared;
  TensorT<T> weight, bias;

  MfeT(const ModelConfig& cfg, Rng& rng)
      : N(cfg.sensors),
        M(cfg.variables),
        P(cfg.mfe.kernel),
        S(cfg.mfe.stride),
        D(cfg.mfe.channels),
        shared(cfg.mfe.shared) {
    check(cfg.length >= P, "embedding kernel longer than the input window");
    int64_t banks = shared ? M : N * M;
    weight = init::fan_in_uniform<T>(rng, {banks * D, 1, P}, P);
    bias = init::zeros<T>({banks * D});
  }

  TensorT<T> forward(const TensorT<T>& x) const {
    int64_t B = x.dim(0);
    if (shared) {
      auto v = ops::reshape(x, {B * N, M, x.dim(3)});
      auto y = ops::conv1d(v, weight, bias, (int)S, 0, 0, (int)M);
      return ops::reshape(y, {B, N, M, D, y.shape().back()});
    }
    auto v = ops::reshape(x, {B, N * M, x.dim(3)});
    auto y = ops::conv1d(v, weight, bias, (int)S, 0, 0, (int)(N * M));
    return ops::reshape(y, {B, N, M, D, y.shape().back()});
  }

  void collect(const std::string& p, NamedTensors<T>& params, NamedTensors<T>&) {
    params.add(p + ".weight", weight);
    params.add(p + ".bias", bias);
  }
};

// Moment morphing: with probability p, rescale each row's first two moments
// toward those of a random partner in the batch, by a Beta(alpha, alpha)
// blend. The affine coefficients are moment statistics, not learnable: they
// are computed outside the tape so gradients flow only through the input.
// Identity in eval mode and for single-row batches.
template <class T>
struct MomT {
  T p, alpha;
  int axis;  // 2 = moments over time, 1 = moments over channels
  static constexpr double kEps = 1e-6;

  // test hooks: when set, substitute for the corresponding random draw
  std::optional<bool> force_apply;
  std::optional<double> force_lambda;
  std::optional<std::vector<int>> force_perm;

  MomT(const ModelConfig& cfg)
      : p((T)cfg.mom.p),
        alpha((T)cfg.mom.alpha),
        axis(cfg.mom.axis == "temporal" ? 2 : 1) {}

  TensorT<T> forward(const TensorT<T>& x, bool training, Rng* rng) const {
    check(x.ndim() == 3, "moment morph expects (batch, channels, time)");
    if (!training) return x;
    int64_t B = x.dim(0);
    if (B == 1) return x;

    auto need_rng = [&]() {
      check(rng != nullptr, "moment morph: training forward needs an rng");
      return rng;
    };
    bool apply = force_apply ? *force_apply : need_rng()->uniform() < (double)p;
    if (!apply) return x;

    double lam = force_lambda ? *force_lambda : need_rng()->beta(alpha, alpha);
    std::vector<int> perm =
        force_perm ? *force_perm : need_rng()->permutation((int)B);
    check((int64_t)perm.size() == B, "moment morph: permutation size mismatch");

    int64_t C = x.dim(1), L = x.dim(2);
    int64_t rows = axis == 2 ? C : L;  // independent stat sites per batch row
    int64_t n = axis == 2 ? L : C;     // samples pooled per site

    // Moments per (batch, site), double accumulation.
    std::vector<double> mu((size_t)(B * rows)), sd((size_t)(B * rows));
    const T* px = x.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t r = 0; r < rows; ++r) {
        double s = 0, s2 = 0;
        for (int64_t i = 0; i < n; ++i) {
          double v = axis == 2 ? px[(b * C + r) * L + i] : px[(b * C + i) * L + r];
          s += v;
          s2 += v * v;
        }
        double m = s / (double)n;
        double var = s2 / (double)n - m * m;
        if (var < 0) var = 0;
        mu[(size_t)(b * rows + r)] = m;
        sd[(size_t)(b * rows + r)] = std::sqrt(var + kEps);
      }

    // Morphed affine: out = x * a + c, with a, c held out of the gradient.
    Shape stat_shape = axis == 2 ? Shape{B, C, 1} : Shape{B, 1, L};
    auto a = TensorT<T>::zeros(stat_shape);
    auto c = TensorT<T>::zeros(stat_shape);
    for (int64_t b = 0; b < B; ++b) {
      int64_t q = perm[(size_t)b];
      for (int64_t r = 0; r < rows; ++r) {
        double m0 = mu[(size_t)(b * rows + r)], s0 = sd[(size_t)(b * rows + r)];
        double mq = mu[(size_t)(q * rows + r)], sq = sd[(size_t)(q * rows + r)];
        double mm = lam * m0 + (1.0 - lam) * mq;
        double sm = lam * s0 + (1.0 - lam) * sq;
        double av = sm / s0;
        a.vec()[(size_t)(b * rows + r)] = (T)av;
        c.vec()[(size_t)(b * rows + r)] = (T)(mm - m0 * av);
      }
    }
    return ops::add(ops::mul(x, a), c);
  }
};

// Depthwise temporal extraction: one odd-width "same" filter per channel.
// Operates on (B', M*D, T) with the sensor axis folded into the batch, so
// every sensor sees the same filters. conv() is the bare operation; the
// stage forward follows it with the configured activation.
template <class T>
struct LtfeT {
  int64_t M, D, K;
  Act act;
  TensorT<T> weight, bias;

  LtfeT(const ModelConfig& cfg, Rng& rng)
      : M(cfg.variables),
        D(cfg.mfe.channels),
        K(cfg.ltfe.kernel),
        act(act_from_name(cfg.ltfe.activation)) {
    check(K % 2 == 1, "depthwise temporal kernel must be odd");
    weight = init::fan_in_uniform<T>(rng, {M * D, 1, K}, K);
    bias = init::zeros<T>({M * D});
  }

  TensorT<T> conv(const TensorT<T>& x) const {
    int hp = (int)(K / 2);
    return ops::conv1d(x, weight, bias, 1, hp, hp, (int)(M * D));
  }

  TensorT<T> forward(const TensorT<T>& x) const {
    return apply_act(conv(x), act);
  }

  void collect(const std::string& p, NamedTensors<T>& params, NamedTensors<T>&) {
    params.add(p + ".weight", weight);
    params.add(p + ".bias", bias);
  }
};

// Cross-channel fusion: a grouped pointwise conv mixes the D embedding
// channels (by default independently per sensor-variable pair; with
// mix_sensors the groups span all sensors of each variable), then an
// ungrouped pointwise conv refines each variable's D channels.
template <class T>
struct CcfT {
  int64_t N, M, D;
  bool mix_sensors;
  Act act;
  TensorT<T> wa, ba, wb, bb;

  CcfT(const ModelConfig& cfg, Rng& rng)
      : N(cfg.sensors),
        M(cfg.variables),
        D(cfg.mfe.channels),
        mix_sensors(cfg.ccf.mix_sensors),
        act(act_from_name(cfg.ccf.activation)) {
    if (mix_sensors)
      wa = init::fan_in_uniform<T>(rng, {M * N * D, N * D, 1}, N * D);
    else
      wa = init::fan_in_uniform<T>(rng, {N * M * D, D, 1}, D);
    ba = init::zeros<T>({N * M * D});
    wb = init::fan_in_uniform<T>(rng, {D, D, 1}, D);
    bb = init::zeros<T>({D});
  }

  // Grouped pointwise mix: by default each (sensor, variable) group fuses
  // its own D channels; with mix_sensors each variable fuses N*D channels
  // spanning all sensors. x: (B, N*M*D, T) -> same shape.
  TensorT<T> mix(const TensorT<T>& x) const {
    int64_t B = x.dim(0), Tn = x.dim(2);
    check(x.ndim() == 3 && x.dim(1) == N * M * D,
          strfmt("channel fusion: expected (B,%lld,T), got %s",
                 (long long)(N * M * D), shape_str(x.shape()).c_str()));
    if (!mix_sensors) return ops::conv1d(x, wa, ba, 1, 0, 0, (int)(N * M));
    // regroup channels as (m, n, d) so each group holds one variable
    auto v = ops::reshape(x, {B, N, M, D, Tn});
    auto pmt = ops::permute(v, {0, 2, 1, 3, 4});
    auto flat = ops::reshape(pmt, {B, M * N * D, Tn});
    auto y = ops::conv1d(flat, wa, ba, 1, 0, 0, (int)M);
    auto back = ops::permute(ops::reshape(y, {B, M, N, D, Tn}), {0, 2, 1, 3, 4});
    return ops::reshape(back, {B, N * M * D, Tn});
  }

  // Per-variable pointwise refinement, restoring the channel layout.
  TensorT<T> refine(const TensorT<T>& x) const {
    int64_t B = x.dim(0), Tn = x.dim(2);
    auto per_var = ops::reshape(x, {B * N * M, D, Tn});
    auto z = ops::conv1d(per_var, wb, bb, 1, 0, 0, 1);
    return ops::reshape(z, {B, N * M * D, Tn});
  }

  // Bare two-conv composition, no activations.
  TensorT<T> raw(const TensorT<T>& x) const { return refine(mix(x)); }

  // Stage forward: each pointwise conv followed by the configured activation.
  TensorT<T> forward(const TensorT<T>& x) const {
    return apply_act(refine(apply_act(mix(x), act)), act);
  }

  void collect(const std::string& p, NamedTensors<T>& params, NamedTensors<T>&) {
    params.add(p + ".mix.weight", wa);
    params.add(p + ".mix.bias", ba);
    params.add(p + ".refine.weight", wb);
    params.add(p + ".refine.bias", bb);
  }
};

}  // namespace whar
