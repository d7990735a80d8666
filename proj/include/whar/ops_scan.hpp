#pragma once

// Selective state-space scan as a single fused op. The heavy lifting (forward
// recurrence and the reverse-mode adjoint scan) lives in the kernel layer;
// this wrapper owns layout conversion and the saved state history.

#include "whar/ops_core.hpp"

namespace whar::ops {

// u, delta: (B, E, T) — per-channel input and timestep.
// Bc, Cc:   (B, S, T) — input/output mixing, channel-major as produced by a
//                       pointwise conv; transposed to time-major internally.
// A: (E, S) decay exponents (negative), D: (E) skip gains.
// Returns y (B, E, T).
template <class T>
TensorT<T> ssm_scan(const TensorT<T>& u, const TensorT<T>& delta,
                    const TensorT<T>& Bc, const TensorT<T>& Cc,
                    const TensorT<T>& A, const TensorT<T>& D) {
  check(u.ndim() == 3, "ssm_scan: u must be (batch, channels, time)");
  int64_t B = u.dim(0), E = u.dim(1), Tn = u.dim(2);
  check(delta.shape() == u.shape(), "ssm_scan: delta shape mismatch");
  check(Bc.ndim() == 3 && Bc.dim(0) == B && Bc.dim(2) == Tn,
        "ssm_scan: B matrix shape mismatch");
  int64_t S = Bc.dim(1);
  check(S <= 64, strfmt("ssm_scan: state size %lld exceeds 64", (long long)S));
  check(Cc.shape() == Bc.shape(), "ssm_scan: C matrix shape mismatch");
  check(A.ndim() == 2 && A.dim(0) == E && A.dim(1) == S,
        "ssm_scan: A shape mismatch");
  check(D.numel() == E, "ssm_scan: D size mismatch");

  auto transpose_st = [&](const T* src, T* dst) {
    // (B, S, T) -> (B, T, S)
    for (int64_t b = 0; b < B; ++b) {
      const T* sp = src + b * S * Tn;
      T* dp = dst + b * S * Tn;
      for (int64_t s = 0; s < S; ++s)
        for (int64_t t = 0; t < Tn; ++t) dp[t * S + s] = sp[s * Tn + t];
    }
  };

  auto Bt = std::make_shared<std::vector<T>>((size_t)(B * Tn * S));
  auto Ct = std::make_shared<std::vector<T>>((size_t)(B * Tn * S));
  transpose_st(Bc.data(), Bt->data());
  transpose_st(Cc.data(), Ct->data());

  auto h_hist = std::make_shared<std::vector<T>>((size_t)(B * E * Tn * S));
  auto abar_hist = std::make_shared<std::vector<T>>((size_t)(B * E * Tn * S));
  TensorT<T> y = TensorT<T>::zeros({B, E, Tn});
  kern::table<T>().ssm_fwd(u.data(), delta.data(), Bt->data(), Ct->data(),
                           A.data(), D.data(), y.data(), h_hist->data(),
                           abar_hist->data(), (size_t)B, (size_t)E, (size_t)S,
                           (size_t)Tn);
  detail::dbg_finite("ssm_scan", y);

  if (detail::recording<T>({&u, &delta, &Bc, &Cc, &A, &D})) {
    y.set_requires_grad(true);
    TapeT<T>::current()->record("ssm_scan", y, [=](const T* g) {
      std::vector<T> du((size_t)(B * E * Tn), T(0));
      std::vector<T> ddelta((size_t)(B * E * Tn), T(0));
      std::vector<T> dBt((size_t)(B * Tn * S), T(0));
      std::vector<T> dCt((size_t)(B * Tn * S), T(0));
      std::vector<T> dA((size_t)(E * S), T(0));
      std::vector<T> dD((size_t)E, T(0));
      kern::table<T>().ssm_bwd(u.data(), delta.data(), Bt->data(), Ct->data(),
                               A.data(), D.data(), h_hist->data(),
                               abar_hist->data(), g, du.data(), ddelta.data(),
                               dBt.data(), dCt.data(), dA.data(), dD.data(),
                               (size_t)B, (size_t)E, (size_t)S, (size_t)Tn);
      const auto& K = kern::table<T>();
      if (u.requires_grad())
        K.add(detail::grad_buf(u.impl()), du.data(),
              detail::grad_buf(u.impl()), B * E * Tn);
      if (delta.requires_grad())
        K.add(detail::grad_buf(delta.impl()), ddelta.data(),
              detail::grad_buf(delta.impl()), B * E * Tn);
      if (A.requires_grad())
        K.add(detail::grad_buf(A.impl()), dA.data(),
              detail::grad_buf(A.impl()), E * S);
      if (D.requires_grad())
        K.add(detail::grad_buf(D.impl()), dD.data(),
              detail::grad_buf(D.impl()), E);
      auto scatter_ts = [&](const std::vector<T>& src, T* dst) {
        // (B, T, S) gradients back onto the (B, S, T) input
        for (int64_t b = 0; b < B; ++b) {
          const T* sp = src.data() + b * Tn * S;
          T* dp = dst + b * S * Tn;
          for (int64_t t = 0; t < Tn; ++t)
            for (int64_t s = 0; s < S; ++s) dp[s * Tn + t] += sp[t * S + s];
        }
      };
      if (Bc.requires_grad()) scatter_ts(dBt, detail::grad_buf(Bc.impl()));
      if (Cc.requires_grad()) scatter_ts(dCt, detail::grad_buf(Cc.impl()));
    });
  }
  return y;
}

}  // namespace whar::ops
