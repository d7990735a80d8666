#pragma once

// Reductions and normalization-flavored ops.

#include <cmath>
#include <utility>

#include "whar/ops_core.hpp"

namespace whar::ops {

namespace detail {

struct AxisSplit {
  int64_t outer = 1, n = 1, inner = 1;
};

template <class T>
inline AxisSplit split_axis(const char* op, const TensorT<T>& x, int axis) {
  check(axis >= 0 && (size_t)axis < x.shape().size(),
        strfmt("%s: axis %d out of range for %s", op, axis,
               shape_str(x.shape()).c_str()));
  AxisSplit s;
  for (int d = 0; d < axis; ++d) s.outer *= x.shape()[(size_t)d];
  s.n = x.shape()[(size_t)axis];
  for (size_t d = (size_t)axis + 1; d < x.shape().size(); ++d)
    s.inner *= x.shape()[d];
  return s;
}

}  // namespace detail

// Biased mean and variance along one axis, kept as size 1 in the outputs.
template <class T>
std::pair<TensorT<T>, TensorT<T>> mean_var(const TensorT<T>& x, int axis) {
  auto s = detail::split_axis("mean_var", x, axis);
  Shape oshape = x.shape();
  oshape[(size_t)axis] = 1;
  TensorT<T> mean = TensorT<T>::zeros(oshape);
  TensorT<T> var = TensorT<T>::zeros(oshape);
  const T* px = x.data();
  T* pm = mean.data();
  T* pv = var.data();
  for (int64_t o = 0; o < s.outer; ++o)
    for (int64_t i = 0; i < s.inner; ++i) {
      const T* base = px + (o * s.n) * s.inner + i;
      double acc = 0;
      for (int64_t a = 0; a < s.n; ++a) acc += (double)base[a * s.inner];
      double mu = acc / (double)s.n;
      double acc2 = 0;
      for (int64_t a = 0; a < s.n; ++a) {
        double d = (double)base[a * s.inner] - mu;
        acc2 += d * d;
      }
      pm[o * s.inner + i] = (T)mu;
      pv[o * s.inner + i] = (T)(acc2 / (double)s.n);
    }

  if (detail::recording<T>({&x})) {
    mean.set_requires_grad(true);
    var.set_requires_grad(true);
    TapeT<T>::current()->record("mean_var.mean", mean, [=](const T* g) {
      T* gx = detail::grad_buf(x.impl());
      T inv = T(1) / (T)s.n;
      for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t i = 0; i < s.inner; ++i) {
          T gm = g[o * s.inner + i] * inv;
          for (int64_t a = 0; a < s.n; ++a)
            gx[(o * s.n + a) * s.inner + i] += gm;
        }
    });
    TapeT<T>::current()->record("mean_var.var", var, [=](const T* g) {
      T* gx = detail::grad_buf(x.impl());
      const T* pxx = x.data();
      const T* pmm = mean.data();
      T inv = T(2) / (T)s.n;
      for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t i = 0; i < s.inner; ++i) {
          T gv = g[o * s.inner + i] * inv;
          T mu = pmm[o * s.inner + i];
          for (int64_t a = 0; a < s.n; ++a) {
            int64_t k = (o * s.n + a) * s.inner + i;
            gx[k] += gv * (pxx[k] - mu);
          }
        }
    });
  }
  return {mean, var};
}

// Mean along one axis, axis removed from the output shape.
template <class T>
TensorT<T> reduce_mean(const TensorT<T>& x, int axis) {
  auto s = detail::split_axis("reduce_mean", x, axis);
  Shape oshape;
  for (size_t d = 0; d < x.shape().size(); ++d)
    if (d != (size_t)axis) oshape.push_back(x.shape()[d]);
  if (oshape.empty()) oshape = {1};
  TensorT<T> out = TensorT<T>::zeros(oshape);
  const T* px = x.data();
  T* py = out.data();
  T inv = T(1) / (T)s.n;
  for (int64_t o = 0; o < s.outer; ++o)
    for (int64_t a = 0; a < s.n; ++a)
      kern::table<T>().axpy(inv, px + (o * s.n + a) * s.inner,
                            py + o * s.inner, s.inner);

  if (detail::recording<T>({&x})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("reduce_mean", out, [=](const T* g) {
      T* gx = detail::grad_buf(x.impl());
      for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t a = 0; a < s.n; ++a)
          kern::table<T>().axpy(inv, g + o * s.inner,
                                gx + (o * s.n + a) * s.inner, s.inner);
    });
  }
  return out;
}

// Row softmax over the last axis, max-subtracted.
template <class T>
TensorT<T> softmax(const TensorT<T>& x) {
  const auto& K = kern::table<T>();
  int64_t c = x.shape().back();
  int64_t rows = x.numel() / c;
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  const T* px = x.data();
  T* py = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = px + r * c;
    T* yr = py + r * c;
    T m = K.maxv(xr, c);
    K.adds(xr, -m, yr, c);
    K.vexp(yr, yr, c);
    T z = K.sum(yr, c);
    K.muls(yr, T(1) / z, yr, c);
  }
  detail::dbg_finite("softmax", out);

  if (detail::recording<T>({&x})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("softmax", out, [=](const T* g) {
      const auto& KK = kern::table<T>();
      T* gx = detail::grad_buf(x.impl());
      const T* y = out.data();
      for (int64_t r = 0; r < rows; ++r) {
        const T* yr = y + r * c;
        const T* gr = g + r * c;
        T dot = KK.dot(gr, yr, c);
        for (int64_t i = 0; i < c; ++i)
          gx[r * c + i] += yr[i] * (gr[i] - dot);
      }
    });
  }
  return out;
}

// Mean cross-entropy of logits (B, C) against integer labels, fused with
// log-softmax. Returns a scalar.
template <class T>
TensorT<T> cross_entropy(const TensorT<T>& logits,
                         const std::vector<int>& labels) {
  check(logits.ndim() == 2, "cross_entropy: logits must be (batch, classes)");
  int64_t B = logits.dim(0), C = logits.dim(1);
  check((int64_t)labels.size() == B,
        strfmt("cross_entropy: %zu labels for batch %lld", labels.size(),
               (long long)B));
  const auto& K = kern::table<T>();
  auto probs = std::make_shared<std::vector<T>>((size_t)(B * C));
  const T* px = logits.data();
  double total = 0;
  for (int64_t b = 0; b < B; ++b) {
    int y = labels[(size_t)b];
    check(y >= 0 && y < C,
          strfmt("cross_entropy: label %d outside [0, %lld)", y, (long long)C));
    const T* xr = px + b * C;
    T* pr = probs->data() + b * C;
    T m = K.maxv(xr, C);
    K.adds(xr, -m, pr, C);
    K.vexp(pr, pr, C);
    T z = K.sum(pr, C);
    K.muls(pr, T(1) / z, pr, C);
    total += (double)m + std::log((double)z) - (double)xr[y];
  }
  TensorT<T> out = TensorT<T>::from({1}, {(T)(total / (double)B)});
  detail::dbg_finite("cross_entropy", out);

  if (detail::recording<T>({&logits})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("cross_entropy", out, [=](const T* g) {
      T* gx = detail::grad_buf(logits.impl());
      T scale = g[0] / (T)B;
      for (int64_t b = 0; b < B; ++b) {
        const T* pr = probs->data() + b * C;
        kern::table<T>().axpy(scale, pr, gx + b * C, C);
        gx[b * C + labels[(size_t)b]] -= scale;
      }
    });
  }
  return out;
}

// Batch normalization over all axes except axis 1 (the channel axis).
// Training mode computes biased batch statistics and folds them into the
// running buffers with the given momentum; eval mode normalizes with the
// running buffers. gamma/beta are (C); running_mean/running_var are plain
// buffers the caller owns.
template <class T>
TensorT<T> batchnorm(const TensorT<T>& x, const TensorT<T>& gamma,
                     const TensorT<T>& beta, TensorT<T>& running_mean,
                     TensorT<T>& running_var, bool training,
                     T momentum = T(0.1), T eps = T(1e-5)) {
  check(x.ndim() >= 2, "batchnorm: input needs a channel axis");
  int64_t B = x.dim(0), C = x.dim(1);
  int64_t inner = x.numel() / (B * C);
  check(gamma.numel() == C && beta.numel() == C,
        "batchnorm: gamma/beta size mismatch");
  check(running_mean.numel() == C && running_var.numel() == C,
        "batchnorm: running stat size mismatch");

  std::vector<T> mu((size_t)C), invstd((size_t)C);
  if (training) {
    int64_t m = B * inner;
    const T* px = x.data();
    for (int64_t c = 0; c < C; ++c) {
      double acc = 0;
      for (int64_t b = 0; b < B; ++b) {
        const T* base = px + (b * C + c) * inner;
        for (int64_t i = 0; i < inner; ++i) acc += (double)base[i];
      }
      double mean = acc / (double)m;
      double acc2 = 0;
      for (int64_t b = 0; b < B; ++b) {
        const T* base = px + (b * C + c) * inner;
        for (int64_t i = 0; i < inner; ++i) {
          double d = (double)base[i] - mean;
          acc2 += d * d;
        }
      }
      double var = acc2 / (double)m;
      mu[(size_t)c] = (T)mean;
      invstd[(size_t)c] = (T)(1.0 / std::sqrt(var + (double)eps));
      running_mean.vec()[(size_t)c] =
          (T(1) - momentum) * running_mean.vec()[(size_t)c] +
          momentum * (T)mean;
      running_var.vec()[(size_t)c] =
          (T(1) - momentum) * running_var.vec()[(size_t)c] +
          momentum * (T)var;
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      mu[(size_t)c] = running_mean.vec()[(size_t)c];
      invstd[(size_t)c] = (T)(1.0 / std::sqrt((double)running_var.vec()[(size_t)c] +
                                              (double)eps));
    }
  }

  TensorT<T> out = TensorT<T>::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<T>>((size_t)x.numel());
  {
    const T* px = x.data();
    T* py = out.data();
    T* ph = xhat->data();
    const T* pg = gamma.data();
    const T* pb = beta.data();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        int64_t off = (b * C + c) * inner;
        T is = invstd[(size_t)c];
        T mn = mu[(size_t)c];
        // xhat = (x - mu) * invstd, out = gamma * xhat + beta
        kern::table<T>().affine(px + off, is, -mn * is, ph + off, inner);
        kern::table<T>().affine(ph + off, pg[(size_t)c], pb[(size_t)c],
                                py + off, inner);
      }
  }
  detail::dbg_finite("batchnorm", out);

  if (detail::recording<T>({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    auto invstd_sp = std::make_shared<std::vector<T>>(invstd);
    TapeT<T>::current()->record("batchnorm", out, [=](const T* g) {
      const auto& K = kern::table<T>();
      int64_t m = B * inner;
      const T* ph = xhat->data();
      const T* pg = gamma.data();
      T* gg = gamma.requires_grad() ? detail::grad_buf(gamma.impl()) : nullptr;
      T* gb = beta.requires_grad() ? detail::grad_buf(beta.impl()) : nullptr;
      T* gx = x.requires_grad() ? detail::grad_buf(x.impl()) : nullptr;
      for (int64_t c = 0; c < C; ++c) {
        double sg = 0, sgh = 0;
        for (int64_t b = 0; b < B; ++b) {
          int64_t off = (b * C + c) * inner;
          sg += (double)K.sum(g + off, inner);
          sgh += (double)K.dot(g + off, ph + off, inner);
        }
        if (gb) gb[(size_t)c] += (T)sg;
        if (gg) gg[(size_t)c] += (T)sgh;
        if (!gx) continue;
        T is = (*invstd_sp)[(size_t)c];
        T gam = pg[(size_t)c];
        if (training) {
          // dx = gamma*invstd/m * (m*g - sum(g) - xhat*sum(g*xhat))
          T k = gam * is / (T)m;
          T a = (T)sg, bsum = (T)sgh;
          for (int64_t b = 0; b < B; ++b) {
            int64_t off = (b * C + c) * inner;
            for (int64_t i = 0; i < inner; ++i)
              gx[off + i] +=
                  k * ((T)m * g[off + i] - a - ph[off + i] * bsum);
          }
        } else {
          for (int64_t b = 0; b < B; ++b) {
            int64_t off = (b * C + c) * inner;
            K.axpy(gam * is, g + off, gx + off, inner);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace whar::ops
