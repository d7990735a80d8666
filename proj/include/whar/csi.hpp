#pragma once

// Baseline cross-sensor interaction: single-head self-attention over sensor
// tokens, each token the flattened (D, T) block of one sensor. Scores are
// plain dot products (optionally 1/sqrt(d_k) scaled), softmax over the key
// index, residual add around the mixed output.

#include <cmath>
#include <string>

#include "whar/ops.hpp"
#include "whar/params.hpp"

namespace whar {

template <class T>
struct CsiT {
  int64_t Dtok, dk;
  bool scaled;
  TensorT<T> wq, wk, wv, wo;

  CsiT(int64_t token_dim, int64_t d_k, bool scale, Rng& rng)
      : Dtok(token_dim), dk(d_k), scaled(scale) {
    wq = init::fan_in_uniform<T>(rng, {dk, Dtok}, Dtok);
    wk = init::fan_in_uniform<T>(rng, {dk, Dtok}, Dtok);
    wv = init::fan_in_uniform<T>(rng, {dk, Dtok}, Dtok);
    wo = init::fan_in_uniform<T>(rng, {Dtok, dk}, dk);
  }

  // x: (B, N, Dtok) -> same shape
  TensorT<T> forward(const TensorT<T>& x) const {
    check(x.ndim() == 3 && x.dim(2) == Dtok,
          strfmt("attention: expected (B,N,%lld), got %s", (long long)Dtok,
                 shape_str(x.shape()).c_str()));
    TensorT<T> none;
    auto q = ops::linear(x, wq, none);
    auto k = ops::linear(x, wk, none);
    auto v = ops::linear(x, wv, none);
    auto scores = ops::bmm(q, k, true);
    if (scaled) {
      auto s = TensorT<T>::full({1}, (T)(1.0 / std::sqrt((double)dk)));
      scores = ops::mul(scores, s);
    }
    auto attn = ops::softmax(scores);
    auto mixed = ops::bmm(attn, v, false);
    return ops::add(x, ops::linear(mixed, wo, none));
  }

  void collect(const std::string& p, NamedTensors<T>& params, NamedTensors<T>&) {
    params.add(p + ".q.weight", wq);
    params.add(p + ".k.weight", wk);
    params.add(p + ".v.weight", wv);
    params.add(p + ".out.weight", wo);
  }
};

}  // namespace whar
