#pragma once

// Convolutions. Padding is explicit (left, right) and materialized into a
// scratch buffer that the backward pass reuses; stride-1 paths run on the
// axpy/dot kernels row-wise.

#include "whar/ops_core.hpp"

namespace whar::ops {

// x (B, Cin, L) * weight (Cout, Cin/groups, K) -> (B, Cout, Lout)
// Lout = (L + pad_l + pad_r - K) / stride + 1. Bias (Cout) optional.
template <class T>
TensorT<T> conv1d(const TensorT<T>& x, const TensorT<T>& weight,
                  const TensorT<T>& bias, int stride, int pad_l, int pad_r,
                  int groups) {
  check(x.ndim() == 3, "conv1d: input must be (batch, channels, length)");
  check(weight.ndim() == 3, "conv1d: weight must be (out, in/groups, k)");
  check(stride >= 1 && pad_l >= 0 && pad_r >= 0 && groups >= 1,
        "conv1d: bad stride/pad/groups");
  int64_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
  int64_t Cout = weight.dim(0), Cg = weight.dim(1), K = weight.dim(2);
  check(Cin % groups == 0 && Cout % groups == 0,
        strfmt("conv1d: channels %lld/%lld not divisible by %d groups",
               (long long)Cin, (long long)Cout, groups));
  check(Cg == Cin / groups,
        strfmt("conv1d: weight expects %lld in-channels per group, input has "
               "%lld",
               (long long)Cg, (long long)(Cin / groups)));
  if (bias.defined()) check(bias.numel() == Cout, "conv1d: bias size mismatch");
  int64_t Lp = L + pad_l + pad_r;
  check(Lp >= K, strfmt("conv1d: kernel %lld longer than padded input %lld",
                        (long long)K, (long long)Lp));
  int64_t Lout = (Lp - K) / stride + 1;
  int64_t Cog = Cout / groups;

  auto xpad = std::make_shared<std::vector<T>>((size_t)(B * Cin * Lp), T(0));
  {
    const T* px = x.data();
    for (int64_t bc = 0; bc < B * Cin; ++bc)
      std::copy(px + bc * L, px + (bc + 1) * L,
                xpad->data() + bc * Lp + pad_l);
  }

  const auto& Kt = kern::table<T>();
  TensorT<T> out = TensorT<T>::zeros({B, Cout, Lout});
  const T* pw = weight.data();
  T* py = out.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t g = 0; g < groups; ++g)
      for (int64_t co = 0; co < Cog; ++co) {
        int64_t oc = g * Cog + co;
        T* yr = py + (b * Cout + oc) * Lout;
        for (int64_t ci = 0; ci < Cg; ++ci) {
          const T* xr = xpad->data() + (b * Cin + g * Cg + ci) * Lp;
          const T* wr = pw + (oc * Cg + ci) * K;
          for (int64_t k = 0; k < K; ++k) {
            if (stride == 1) {
              Kt.axpy(wr[k], xr + k, yr, Lout);
            } else {
              T wv = wr[k];
              for (int64_t lo = 0; lo < Lout; ++lo)
                yr[lo] += wv * xr[lo * stride + k];
            }
          }
        }
        if (bias.defined()) Kt.adds(yr, bias.data()[oc], yr, Lout);
      }
  detail::dbg_finite("conv1d", out);

  bool rec = bias.defined() ? detail::recording<T>({&x, &weight, &bias})
                            : detail::recording<T>({&x, &weight});
  if (rec) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("conv1d", out, [=](const T* g) {
      const auto& KK = kern::table<T>();
      const T* pww = weight.data();
      T* gw = weight.requires_grad() ? detail::grad_buf(weight.impl())
                                     : nullptr;
      T* gb = bias.defined() && bias.requires_grad()
                  ? detail::grad_buf(bias.impl())
                  : nullptr;
      bool need_gx = x.requires_grad();
      std::vector<T> gxpad;
      if (need_gx) gxpad.assign((size_t)(B * Cin * Lp), T(0));
      for (int64_t b = 0; b < B; ++b)
        for (int64_t gr = 0; gr < groups; ++gr)
          for (int64_t co = 0; co < Cog; ++co) {
            int64_t oc = gr * Cog + co;
            const T* grow = g + (b * Cout + oc) * Lout;
            if (gb) gb[oc] += KK.sum(grow, Lout);
            for (int64_t ci = 0; ci < Cg; ++ci) {
              int64_t xrow = (b * Cin + gr * Cg + ci) * Lp;
              const T* xr = xpad->data() + xrow;
              const T* wr = pww + (oc * Cg + ci) * K;
              T* gwr = gw ? gw + (oc * Cg + ci) * K : nullptr;
              T* gxr = need_gx ? gxpad.data() + xrow : nullptr;
              for (int64_t k = 0; k < K; ++k) {
                if (stride == 1) {
                  if (gwr) gwr[k] += KK.dot(grow, xr + k, Lout);
                  if (gxr) KK.axpy(wr[k], grow, gxr + k, Lout);
                } else {
                  T accw = 0, wv = wr[k];
                  for (int64_t lo = 0; lo < Lout; ++lo) {
                    T gv = grow[lo];
                    accw += gv * xr[lo * stride + k];
                    if (gxr) gxr[lo * stride + k] += wv * gv;
                  }
                  if (gwr) gwr[k] += accw;
                }
              }
            }
          }
      if (need_gx) {
        T* gx = detail::grad_buf(x.impl());
        for (int64_t bc = 0; bc < B * Cin; ++bc)
          KK.add(gx + bc * L, gxpad.data() + bc * Lp + pad_l, gx + bc * L, L);
      }
    });
  }
  return out;
}

// Depthwise 2-D conv with "same" padding, stride 1.
// x (B, C, H, W) * weight (C, kh, kw) -> (B, C, H, W). Bias (C) optional.
// kh, kw must be odd so the output grid aligns with the input.
template <class T>
TensorT<T> dwconv2d_same(const TensorT<T>& x, const TensorT<T>& weight,
                         const TensorT<T>& bias) {
  check(x.ndim() == 4, "dwconv2d: input must be (batch, channels, h, w)");
  check(weight.ndim() == 3, "dwconv2d: weight must be (channels, kh, kw)");
  int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t kh = weight.dim(1), kw = weight.dim(2);
  check(weight.dim(0) == C, "dwconv2d: channel mismatch");
  check(kh % 2 == 1 && kw % 2 == 1, "dwconv2d: kernel sides must be odd");
  if (bias.defined()) check(bias.numel() == C, "dwconv2d: bias size mismatch");
  int64_t ph = kh / 2, pw_ = kw / 2;
  int64_t Hp = H + 2 * ph, Wp = W + 2 * pw_;

  auto xpad = std::make_shared<std::vector<T>>((size_t)(B * C * Hp * Wp), T(0));
  {
    const T* px = x.data();
    for (int64_t bc = 0; bc < B * C; ++bc)
      for (int64_t i = 0; i < H; ++i)
        std::copy(px + (bc * H + i) * W, px + (bc * H + i + 1) * W,
                  xpad->data() + (bc * Hp + i + ph) * Wp + pw_);
  }

  const auto& Kt = kern::table<T>();
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const T* pwv = weight.data();
  T* py = out.data();
  for (int64_t bc = 0; bc < B * C; ++bc) {
    int64_t c = bc % C;
    const T* wr = pwv + c * kh * kw;
    for (int64_t i = 0; i < H; ++i) {
      T* yr = py + (bc * H + i) * W;
      for (int64_t u = 0; u < kh; ++u) {
        const T* xr = xpad->data() + (bc * Hp + i + u) * Wp;
        for (int64_t v = 0; v < kw; ++v)
          Kt.axpy(wr[u * kw + v], xr + v, yr, W);
      }
      if (bias.defined()) Kt.adds(yr, bias.data()[c], yr, W);
    }
  }
  detail::dbg_finite("dwconv2d", out);

  bool rec = bias.defined() ? detail::recording<T>({&x, &weight, &bias})
                            : detail::recording<T>({&x, &weight});
  if (rec) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("dwconv2d", out, [=](const T* g) {
      const auto& KK = kern::table<T>();
      const T* pww = weight.data();
      T* gw = weight.requires_grad() ? detail::grad_buf(weight.impl())
                                     : nullptr;
      T* gb = bias.defined() && bias.requires_grad()
                  ? detail::grad_buf(bias.impl())
                  : nullptr;
      bool need_gx = x.requires_grad();
      std::vector<T> gxpad;
      if (need_gx) gxpad.assign((size_t)(B * C * Hp * Wp), T(0));
      for (int64_t bc = 0; bc < B * C; ++bc) {
        int64_t c = bc % C;
        const T* wr = pww + c * kh * kw;
        T* gwr = gw ? gw + c * kh * kw : nullptr;
        for (int64_t i = 0; i < H; ++i) {
          const T* grow = g + (bc * H + i) * W;
          if (gb) gb[c] += KK.sum(grow, W);
          for (int64_t u = 0; u < kh; ++u) {
            int64_t prow = (bc * Hp + i + u) * Wp;
            const T* xr = xpad->data() + prow;
            T* gxr = need_gx ? gxpad.data() + prow : nullptr;
            for (int64_t v = 0; v < kw; ++v) {
              if (gwr) gwr[u * kw + v] += KK.dot(grow, xr + v, W);
              if (gxr) KK.axpy(wr[u * kw + v], grow, gxr + v, W);
            }
          }
        }
      }
      if (need_gx) {
        T* gx = detail::grad_buf(x.impl());
        for (int64_t bc = 0; bc < B * C; ++bc)
          for (int64_t i = 0; i < H; ++i) {
            int64_t xo = (bc * H + i) * W;
            KK.add(gx + xo, gxpad.data() + (bc * Hp + i + ph) * Wp + pw_,
                   gx + xo, W);
          }
      }
    });
  }
  return out;
}

}  // namespace whar::ops
