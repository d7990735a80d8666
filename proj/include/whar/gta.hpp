#pragma once

// Global temporal aggregation: average over the variable dimension, then a
// gated selective-scan block over time. The block follows the composition
// Linear( silu(SSM(Conv(Linear(x)))) * Linear(Conv(Linear(x))) ) with a
// residual around the whole thing; both branch convs are short causal
// depthwise filters. Note the nonstandard placement of the nonlinearity
// (after the scan) and the conv in the gate branch; both are intentional.

#include <cmath>
#include <string>

#include "whar/ops.hpp"
#include "whar/params.hpp"

namespace whar {

// (B, N, D*M, T) -> (B, N*D, T), mean over the M positions of each channel
// block. Channel order within a sensor is (d, m), m fastest.
template <class T>
TensorT<T> gap_forward(const TensorT<T>& x, int64_t M) {
  check(x.ndim() == 4, "gap: input must be (B, N, D*M, T)");
  int64_t B = x.dim(0), N = x.dim(1), DM = x.dim(2), Tn = x.dim(3);
  check(DM % M == 0, strfmt("gap: channel extent %lld not divisible by %lld",
                            (long long)DM, (long long)M));
  int64_t D = DM / M;
  auto v = ops::reshape(x, {B * N, D, M, Tn});
  auto m = ops::reduce_mean(v, 2);
  return ops::reshape(m, {B, N * D, Tn});
}

template <class T>
struct MambaT {
  int64_t E, S, W;
  TensorT<T> w_in1, b_in1, w_in2, b_in2;
  TensorT<T> conv_a, cb_a, conv_b, cb_b;
  TensorT<T> w_dt, b_dt, w_B, w_C, A_log, D_skip;
  TensorT<T> w_gate, b_gate, w_out, b_out;

  bool force_gate_ones = false;  // test hook: bypass the gate branch

  MambaT(int64_t width, int64_t state, int64_t conv_width, Rng& rng)
      : E(width), S(state), W(conv_width) {
    check(S >= 1 && S <= 64, "state size must be in [1,64]");
    auto pw = [&](int64_t out, int64_t in) {
      return init::fan_in_uniform<T>(rng, {out, in, 1}, in);
    };
    w_in1 = pw(E, E);
    b_in1 = init::zeros<T>({E});
    w_in2 = pw(E, E);
    b_in2 = init::zeros<T>({E});
    conv_a = init::fan_in_uniform<T>(rng, {E, 1, W}, W);
    cb_a = init::zeros<T>({E});
    conv_b = init::fan_in_uniform<T>(rng, {E, 1, W}, W);
    cb_b = init::zeros<T>({E});
    w_dt = pw(E, E);
    // step-size bias chosen so softplus lands in [1e-3, 1e-1] at init,
    // keeping exp(dt*A) well inside (0,1)
    b_dt = init::zeros<T>({E});
    for (auto& v : b_dt.vec()) {
      double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
      v = (T)std::log(std::expm1(dt));
    }
    w_B = pw(S, E);
    w_C = pw(S, E);
    A_log = init::zeros<T>({E, S});
    for (int64_t e = 0; e < E; ++e)
      for (int64_t s = 0; s < S; ++s)
        A_log.vec()[(size_t)(e * S + s)] = (T)std::log((double)(s + 1));
    D_skip = init::constant<T>({E}, (T)1);
    w_gate = pw(E, E);
    b_gate = init::zeros<T>({E});
    w_out = pw(E, E);
    b_out = init::zeros<T>({E});
  }

  // x: (B, E, T) -> same shape
  TensorT<T> forward(const TensorT<T>& x) const {
    check(x.ndim() == 3 && x.dim(1) == E,
          strfmt("scan block: expected (B,%lld,T), got %s", (long long)E,
                 shape_str(x.shape()).c_str()));
    TensorT<T> none;
    auto x1 = ops::conv1d(x, w_in1, b_in1, 1, 0, 0, 1);
    auto u = ops::conv1d(x1, conv_a, cb_a, 1, (int)(W - 1), 0, (int)E);
    auto dt = ops::softplus(ops::conv1d(u, w_dt, b_dt, 1, 0, 0, 1));
    auto Bc = ops::conv1d(u, w_B, none, 1, 0, 0, 1);
    auto Cc = ops::conv1d(u, w_C, none, 1, 0, 0, 1);
    auto minus_one = TensorT<T>::full({1}, (T)-1);
    auto A = ops::mul(ops::exp(A_log), minus_one);
    auto y = ops::ssm_scan(u, dt, Bc, Cc, A, D_skip);
    auto ys = ops::silu(y);

    TensorT<T> g;
    if (force_gate_ones) {
      g = TensorT<T>::full(x.shape(), (T)1);
    } else {
      auto x2 = ops::conv1d(x, w_in2, b_in2, 1, 0, 0, 1);
      auto v = ops::conv1d(x2, conv_b, cb_b, 1, (int)(W - 1), 0, (int)E);
      g = ops::conv1d(v, w_gate, b_gate, 1, 0, 0, 1);
    }
    auto out = ops::conv1d(ops::mul(ys, g), w_out, b_out, 1, 0, 0, 1);
    return ops::add(out, x);
  }

  void collect(const std::string& p, NamedTensors<T>& params, NamedTensors<T>&) {
    params.add(p + ".in1.weight", w_in1);
    params.add(p + ".in1.bias", b_in1);
    params.add(p + ".in2.weight", w_in2);
    params.add(p + ".in2.bias", b_in2);
    params.add(p + ".conv_a.weight", conv_a);
    params.add(p + ".conv_a.bias", cb_a);
    params.add(p + ".conv_b.weight", conv_b);
    params.add(p + ".conv_b.bias", cb_b);
    params.add(p + ".dt.weight", w_dt);
    params.add(p + ".dt.bias", b_dt);
    params.add(p + ".proj_b.weight", w_B);
    params.add(p + ".proj_c.weight", w_C);
    params.add(p + ".a_log", A_log);
    params.add(p + ".d_skip", D_skip);
    params.add(p + ".gate.weight", w_gate);
    params.add(p + ".gate.bias", b_gate);
    params.add(p + ".out.weight", w_out);
    params.add(p + ".out.bias", b_out);
  }
};

}  // namespace whar
