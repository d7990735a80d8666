#pragma once

// Cascaded fusion block. Squeezes C channels to C/r, runs a short cascade of
// depthwise 2d convolutions over the (face, time) plane, concatenates every
// cascade stage, and fuses back to C channels with a residual connection.
// With the fusion conv and its normalization bias at zero, the block is the
// identity, which makes it safe to stack.

#include <string>
#include <vector>

#include "whar/config.hpp"
#include "whar/ops.hpp"
#include "whar/params.hpp"

namespace whar {

template <class T>
struct CfbT {
  int64_t C, Cm, K, kh, kw;
  TensorT<T> w_sq, b_sq, g1, be1, rm1, rv1;
  std::vector<TensorT<T>> w_step, b_step;
  TensorT<T> w_fu, b_fu, g2, be2, rm2, rv2;

  CfbT(int64_t channels, int64_t r, int64_t steps, Kernel2d kernel, Rng& rng)
      : C(channels), Cm(channels / r), K(steps), kh(kernel.h), kw(kernel.w) {
    check(Cm >= 1, strfmt("fusion block: %lld channels cannot squeeze by %lld",
                          (long long)C, (long long)r));
    w_sq = init::fan_in_uniform<T>(rng, {Cm, C, 1}, C);
    b_sq = init::zeros<T>({Cm});
    g1 = init::constant<T>({Cm}, (T)1);
    be1 = init::zeros<T>({Cm});
    rm1 = init::zeros<T>({Cm}, false);
    rv1 = init::constant<T>({Cm}, (T)1, false);
    for (int64_t k = 0; k < K; ++k) {
      w_step.push_back(init::fan_in_uniform<T>(rng, {Cm, kh, kw}, kh * kw));
      b_step.push_back(init::zeros<T>({Cm}));
    }
    w_fu = init::fan_in_uniform<T>(rng, {C, (K + 1) * Cm, 1}, (K + 1) * Cm);
    b_fu = init::zeros<T>({C});
    g2 = init::constant<T>({C}, (T)1);
    be2 = init::zeros<T>({C});
    rm2 = init::zeros<T>({C}, false);
    rv2 = init::constant<T>({C}, (T)1, false);
  }

  // x: (B, C, F, L) -> same shape
  TensorT<T> forward(const TensorT<T>& x, bool training) {
    check(x.ndim() == 4 && x.dim(1) == C,
          strfmt("fusion block: expected (B,%lld,F,L), got %s", (long long)C,
                 shape_str(x.shape()).c_str()));
    int64_t B = x.dim(0), F = x.dim(2), L = x.dim(3);

    auto flat = ops::reshape(x, {B, C, F * L});
    auto z = ops::conv1d(flat, w_sq, b_sq, 1, 0, 0, 1);
    z = ops::batchnorm(z, g1, be1, rm1, rv1, training);
    z = ops::gelu(z);
    auto z4 = ops::reshape(z, {B, Cm, F, L});

    std::vector<TensorT<T>> stages{z4};
    auto cur = z4;
    for (int64_t k = 0; k < K; ++k) {
      cur = ops::gelu(ops::dwconv2d_same(cur, w_step[(size_t)k], b_step[(size_t)k]));
      stages.push_back(cur);
    }

    auto cat = ops::concat(stages, 1);
    auto u = ops::reshape(cat, {B, (K + 1) * Cm, F * L});
    auto y = ops::conv1d(u, w_fu, b_fu, 1, 0, 0, 1);
    y = ops::batchnorm(y, g2, be2, rm2, rv2, training);
    y = ops::gelu(y);
    return ops::add(x, ops::reshape(y, {B, C, F, L}));
  }

  void collect(const std::string& p, NamedTensors<T>& params, NamedTensors<T>& bufs) {
    params.add(p + ".squeeze.weight", w_sq);
    params.add(p + ".squeeze.bias", b_sq);
    params.add(p + ".squeeze_bn.gamma", g1);
    params.add(p + ".squeeze_bn.beta", be1);
    for (int64_t k = 0; k < K; ++k) {
      auto s = p + ".step" + std::to_string(k);
      params.add(s + ".weight", w_step[(size_t)k]);
      params.add(s + ".bias", b_step[(size_t)k]);
    }
    params.add(p + ".fuse.weight", w_fu);
    params.add(p + ".fuse.bias", b_fu);
    params.add(p + ".fuse_bn.gamma", g2);
    params.add(p + ".fuse_bn.beta", be2);
    bufs.add(p + ".squeeze_bn.mean", rm1);
    bufs.add(p + ".squeeze_bn.var", rv1);
    bufs.add(p + ".fuse_bn.mean", rm2);
    bufs.add(p + ".fuse_bn.var", rv2);
  }
};

}  // namespace whar
