#pragma once

// Dense linear maps built on the dot/axpy kernels.

#include "whar/ops_core.hpp"

namespace whar::ops {

// y[..., out] = x[..., in] @ weight(out, in)^T + bias(out).
// Bias may be undefined to skip it.
template <class T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& weight,
                  const TensorT<T>& bias) {
  check(weight.ndim() == 2, "linear: weight must be (out, in)");
  int64_t In = weight.dim(1), Out = weight.dim(0);
  check(x.shape().back() == In,
        strfmt("linear: input features %lld, weight expects %lld",
               (long long)x.shape().back(), (long long)In));
  if (bias.defined())
    check(bias.numel() == Out, "linear: bias size mismatch");
  int64_t R = x.numel() / In;
  Shape oshape = x.shape();
  oshape.back() = Out;

  const auto& K = kern::table<T>();
  TensorT<T> out = TensorT<T>::zeros(oshape);
  const T* px = x.data();
  const T* pw = weight.data();
  T* py = out.data();
  for (int64_t r = 0; r < R; ++r) {
    const T* xr = px + r * In;
    T* yr = py + r * Out;
    for (int64_t o = 0; o < Out; ++o) yr[o] = K.dot(xr, pw + o * In, In);
    if (bias.defined()) K.add(yr, bias.data(), yr, Out);
  }
  detail::dbg_finite("linear", out);

  bool rec = bias.defined() ? detail::recording<T>({&x, &weight, &bias})
                            : detail::recording<T>({&x, &weight});
  if (rec) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("linear", out, [=](const T* g) {
      const auto& KK = kern::table<T>();
      const T* pxx = x.data();
      const T* pww = weight.data();
      T* gx = x.requires_grad() ? detail::grad_buf(x.impl()) : nullptr;
      T* gw = weight.requires_grad() ? detail::grad_buf(weight.impl())
                                     : nullptr;
      T* gb = bias.defined() && bias.requires_grad()
                  ? detail::grad_buf(bias.impl())
                  : nullptr;
      for (int64_t r = 0; r < R; ++r) {
        const T* gr = g + r * Out;
        for (int64_t o = 0; o < Out; ++o) {
          T go = gr[o];
          if (go == T(0)) continue;
          if (gx) KK.axpy(go, pww + o * In, gx + r * In, In);
          if (gw) KK.axpy(go, pxx + r * In, gw + o * In, In);
        }
        if (gb) KK.add(gb, gr, gb, Out);
      }
    });
  }
  return out;
}

// Batched matmul: a (B, M, K) with b (B, K, N), or b (B, N, K) when
// transpose_b is set. Output (B, M, N).
template <class T>
TensorT<T> bmm(const TensorT<T>& a, const TensorT<T>& b, bool transpose_b) {
  check(a.ndim() == 3 && b.ndim() == 3, "bmm: inputs must be rank 3");
  int64_t B = a.dim(0), M = a.dim(1), Kd = a.dim(2);
  check(b.dim(0) == B, "bmm: batch mismatch");
  int64_t N = transpose_b ? b.dim(1) : b.dim(2);
  int64_t Kb = transpose_b ? b.dim(2) : b.dim(1);
  check(Kb == Kd, strfmt("bmm: contraction mismatch %lld vs %lld",
                         (long long)Kd, (long long)Kb));

  const auto& K = kern::table<T>();
  TensorT<T> out = TensorT<T>::zeros({B, M, N});
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = out.data();
  for (int64_t bi = 0; bi < B; ++bi) {
    const T* am = pa + bi * M * Kd;
    const T* bm = pb + bi * (transpose_b ? N * Kd : Kd * N);
    T* ym = py + bi * M * N;
    if (transpose_b) {
      for (int64_t m = 0; m < M; ++m)
        for (int64_t n = 0; n < N; ++n)
          ym[m * N + n] = K.dot(am + m * Kd, bm + n * Kd, Kd);
    } else {
      for (int64_t m = 0; m < M; ++m)
        for (int64_t k = 0; k < Kd; ++k)
          K.axpy(am[m * Kd + k], bm + k * N, ym + m * N, N);
    }
  }
  detail::dbg_finite("bmm", out);

  if (detail::recording<T>({&a, &b})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("bmm", out, [=](const T* g) {
      const auto& KK = kern::table<T>();
      const T* paa = a.data();
      const T* pbb = b.data();
      T* ga = a.requires_grad() ? detail::grad_buf(a.impl()) : nullptr;
      T* gb = b.requires_grad() ? detail::grad_buf(b.impl()) : nullptr;
      for (int64_t bi = 0; bi < B; ++bi) {
        const T* am = paa + bi * M * Kd;
        const T* bm = pbb + bi * (transpose_b ? N * Kd : Kd * N);
        const T* gm = g + bi * M * N;
        T* gam = ga ? ga + bi * M * Kd : nullptr;
        T* gbm = gb ? gb + bi * (transpose_b ? N * Kd : Kd * N) : nullptr;
        if (transpose_b) {
          // y = a @ b^T
          for (int64_t m = 0; m < M; ++m)
            for (int64_t n = 0; n < N; ++n) {
              T gv = gm[m * N + n];
              if (gv == T(0)) continue;
              if (gam) KK.axpy(gv, bm + n * Kd, gam + m * Kd, Kd);
              if (gbm) KK.axpy(gv, am + m * Kd, gbm + n * Kd, Kd);
            }
        } else {
          // y = a @ b
          for (int64_t m = 0; m < M; ++m) {
            if (gam)
              for (int64_t k = 0; k < Kd; ++k)
                gam[m * Kd + k] += KK.dot(gm + m * N, bm + k * N, N);
            if (gbm)
              for (int64_t k = 0; k < Kd; ++k)
                KK.axpy(am[m * Kd + k], gm + m * N, gbm + k * N, N);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace whar::ops
