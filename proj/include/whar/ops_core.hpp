#pragma once

// Elementwise and shape ops with reverse-mode support. Broadcasting follows
// the usual right-aligned rule: shapes are compared from the trailing axis,
// size-1 extents stretch. Gradients of broadcast inputs are sum-reduced over
// the stretched axes.

#include <cmath>
#include <memory>

#include "whar/kernels.hpp"
#include "whar/tape.hpp"
#include "whar/tensor.hpp"

namespace whar::ops {

namespace detail {

#ifndef NDEBUG
template <class T>
inline void dbg_finite(const char* op, const TensorT<T>& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite((double)t.data()[i]))
      fail(strfmt("%s: non-finite value at flat index %lld", op,
                  (long long)i));
}
#else
template <class T>
inline void dbg_finite(const char*, const TensorT<T>&) {}
#endif

struct BcPlan {
  Shape out;
  // strides aligned to out rank; 0 marks a broadcast axis
  std::vector<int64_t> sa, sb;
};

inline BcPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  size_t r = std::max(a.size(), b.size());
  BcPlan p;
  p.out.resize(r);
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (r - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (r - b.size()));
  for (size_t d = 0; d < r; ++d) {
    if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1)
      fail(strfmt("%s: shapes %s and %s do not broadcast at axis %zu", op,
                  shape_str(a).c_str(), shape_str(b).c_str(), d));
    p.out[d] = std::max(pa[d], pb[d]);
  }
  p.sa.assign(r, 0);
  p.sb.assign(r, 0);
  int64_t st = 1;
  for (size_t d = r; d-- > 0;) {
    p.sa[d] = pa[d] == 1 ? 0 : st;
    st *= pa[d];
  }
  st = 1;
  for (size_t d = r; d-- > 0;) {
    p.sb[d] = pb[d] == 1 ? 0 : st;
    st *= pb[d];
  }
  return p;
}

// Walks the broadcast output one innermost row at a time.
// fn(oa, ob, oy, inner, ca, cb): offsets into a/b/out, the row length, and
// whether a/b advance along the row (contiguous) or stay fixed (broadcast).
template <class F>
inline void bc_rows(const BcPlan& p, F&& fn) {
  size_t r = p.out.size();
  int64_t inner = r ? p.out[r - 1] : 1;
  int64_t ia = r ? p.sa[r - 1] : 0;
  int64_t ib = r ? p.sb[r - 1] : 0;
  int64_t rows = 1;
  for (size_t d = 0; d + 1 < r; ++d) rows *= p.out[d];
  std::vector<int64_t> idx(r > 0 ? r - 1 : 0, 0);
  int64_t oa = 0, ob = 0, oy = 0;
  for (int64_t row = 0; row < rows; ++row) {
    fn(oa, ob, oy, inner, ia != 0, ib != 0);
    oy += inner;
    for (size_t d = idx.size(); d-- > 0;) {
      ++idx[d];
      oa += p.sa[d];
      ob += p.sb[d];
      if (idx[d] < p.out[d]) break;
      oa -= p.sa[d] * p.out[d];
      ob -= p.sb[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

template <class T>
inline T* grad_buf(const std::shared_ptr<TensorImplT<T>>& impl) {
  if (!impl->grad)
    impl->grad =
        std::make_shared<std::vector<T>>(impl->data->size(), T(0));
  return impl->grad->data();
}

template <class T>
inline bool recording(std::initializer_list<const TensorT<T>*> ins) {
  if (!TapeT<T>::current()) return false;
  for (const TensorT<T>* t : ins)
    if ((*t).requires_grad()) return true;
  return false;
}

enum class BinOp { add, sub, mul };

template <class T>
TensorT<T> binary(const char* name, BinOp kind, const TensorT<T>& a,
                  const TensorT<T>& b) {
  const auto& K = kern::table<T>();
  BcPlan p = plan_broadcast(name, a.shape(), b.shape());
  TensorT<T> out = TensorT<T>::zeros(p.out);
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = out.data();
  bc_rows(p, [&](int64_t oa, int64_t ob, int64_t oy, int64_t n, bool ca,
                 bool cb) {
    if (ca && cb) {
      switch (kind) {
        case BinOp::add: K.add(pa + oa, pb + ob, py + oy, n); break;
        case BinOp::sub: K.sub(pa + oa, pb + ob, py + oy, n); break;
        case BinOp::mul: K.mul(pa + oa, pb + ob, py + oy, n); break;
      }
    } else if (ca && !cb) {
      switch (kind) {
        case BinOp::add: K.adds(pa + oa, pb[ob], py + oy, n); break;
        case BinOp::sub: K.adds(pa + oa, -pb[ob], py + oy, n); break;
        case BinOp::mul: K.muls(pa + oa, pb[ob], py + oy, n); break;
      }
    } else if (!ca && cb) {
      switch (kind) {
        case BinOp::add: K.adds(pb + ob, pa[oa], py + oy, n); break;
        case BinOp::sub:
          for (int64_t i = 0; i < n; ++i) py[oy + i] = pa[oa] - pb[ob + i];
          break;
        case BinOp::mul: K.muls(pb + ob, pa[oa], py + oy, n); break;
      }
    } else {
      T v = kind == BinOp::add   ? pa[oa] + pb[ob]
            : kind == BinOp::sub ? pa[oa] - pb[ob]
                                 : pa[oa] * pb[ob];
      for (int64_t i = 0; i < n; ++i) py[oy + i] = v;
    }
  });
  dbg_finite(name, out);

  if (recording<T>({&a, &b})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record(name, out, [=](const T* g) {
      const auto& KK = kern::table<T>();
      const T* da = a.data();
      const T* db = b.data();
      T* ga = a.requires_grad() ? grad_buf(a.impl()) : nullptr;
      T* gb = b.requires_grad() ? grad_buf(b.impl()) : nullptr;
      bc_rows(p, [&](int64_t oa, int64_t ob, int64_t oy, int64_t n, bool ca,
                     bool cb) {
        const T* gr = g + oy;
        if (ga) {
          switch (kind) {
            case BinOp::add:
            case BinOp::sub:
              if (ca)
                KK.axpy(T(1), gr, ga + oa, n);
              else
                ga[oa] += KK.sum(gr, n);
              break;
            case BinOp::mul:
              if (ca && cb)
                for (int64_t i = 0; i < n; ++i)
                  ga[oa + i] += gr[i] * db[ob + i];
              else if (ca && !cb)
                KK.axpy(db[ob], gr, ga + oa, n);
              else if (!ca && cb)
                ga[oa] += KK.dot(gr, db + ob, n);
              else
                ga[oa] += KK.sum(gr, n) * db[ob];
              break;
          }
        }
        if (gb) {
          switch (kind) {
            case BinOp::add:
              if (cb)
                KK.axpy(T(1), gr, gb + ob, n);
              else
                gb[ob] += KK.sum(gr, n);
              break;
            case BinOp::sub:
              if (cb)
                KK.axpy(T(-1), gr, gb + ob, n);
              else
                gb[ob] -= KK.sum(gr, n);
              break;
            case BinOp::mul:
              if (ca && cb)
                for (int64_t i = 0; i < n; ++i)
                  gb[ob + i] += gr[i] * da[oa + i];
              else if (cb && !ca)
                KK.axpy(da[oa], gr, gb + ob, n);
              else if (!cb && ca)
                gb[ob] += KK.dot(gr, da + oa, n);
              else
                gb[ob] += KK.sum(gr, n) * da[oa];
              break;
          }
        }
      });
    });
  }
  return out;
}

}  // namespace detail

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary("add", detail::BinOp::add, a, b);
}
template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary("sub", detail::BinOp::sub, a, b);
}
template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary("mul", detail::BinOp::mul, a, b);
}

// --- unary ops --------------------------------------------------------------

template <class T>
TensorT<T> gelu(const TensorT<T>& x) {
  const auto& K = kern::table<T>();
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  auto saved = std::make_shared<std::vector<T>>(x.numel());
  K.gelu_fwd(x.data(), out.data(), saved->data(), x.numel());
  detail::dbg_finite("gelu", out);
  if (detail::recording<T>({&x})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("gelu", out, [=](const T* g) {
      kern::table<T>().gelu_bwd(g, x.data(), saved->data(),
                                detail::grad_buf(x.impl()), x.numel());
    });
  }
  return out;
}

template <class T>
TensorT<T> silu(const TensorT<T>& x) {
  const auto& K = kern::table<T>();
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  auto saved = std::make_shared<std::vector<T>>(x.numel());
  K.silu_fwd(x.data(), out.data(), saved->data(), x.numel());
  detail::dbg_finite("silu", out);
  if (detail::recording<T>({&x})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("silu", out, [=](const T* g) {
      kern::table<T>().silu_bwd(g, x.data(), saved->data(),
                                detail::grad_buf(x.impl()), x.numel());
    });
  }
  return out;
}

template <class T>
TensorT<T> softplus(const TensorT<T>& x) {
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  kern::table<T>().softplus_fwd(x.data(), out.data(), x.numel());
  detail::dbg_finite("softplus", out);
  if (detail::recording<T>({&x})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("softplus", out, [=](const T* g) {
      kern::table<T>().softplus_bwd(g, x.data(), detail::grad_buf(x.impl()),
                                    x.numel());
    });
  }
  return out;
}

template <class T>
TensorT<T> exp(const TensorT<T>& x) {
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  kern::table<T>().vexp(x.data(), out.data(), x.numel());
  detail::dbg_finite("exp", out);
  if (detail::recording<T>({&x})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("exp", out, [=](const T* g) {
      T* gx = detail::grad_buf(x.impl());
      const T* y = out.data();
      for (int64_t i = 0; i < x.numel(); ++i) gx[i] += g[i] * y[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> sqrt(const TensorT<T>& x) {
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  kern::table<T>().vsqrt(x.data(), out.data(), x.numel());
  detail::dbg_finite("sqrt", out);
  if (detail::recording<T>({&x})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("sqrt", out, [=](const T* g) {
      T* gx = detail::grad_buf(x.impl());
      const T* y = out.data();
      for (int64_t i = 0; i < x.numel(); ++i)
        gx[i] += g[i] * T(0.5) / y[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> reciprocal(const TensorT<T>& x) {
  TensorT<T> out = TensorT<T>::zeros(x.shape());
  kern::table<T>().vrecip(x.data(), out.data(), x.numel());
  detail::dbg_finite("reciprocal", out);
  if (detail::recording<T>({&x})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("reciprocal", out, [=](const T* g) {
      T* gx = detail::grad_buf(x.impl());
      const T* y = out.data();
      for (int64_t i = 0; i < x.numel(); ++i) gx[i] -= g[i] * y[i] * y[i];
    });
  }
  return out;
}

// --- graph/shape ops --------------------------------------------------------

// Shares data, drops gradient history: gradients never flow past this point.
template <class T>
TensorT<T> stop_grad(const TensorT<T>& x) {
  return x.view(x.shape());
}

template <class T>
TensorT<T> reshape(const TensorT<T>& x, Shape shape) {
  TensorT<T> out = x.view(std::move(shape));
  if (detail::recording<T>({&x})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("reshape", out, [=](const T* g) {
      kern::table<T>().axpy(T(1), g, detail::grad_buf(x.impl()), x.numel());
    });
  }
  return out;
}

namespace detail {

// Iteration plan for a permute: odometer over the leading output axes, with
// the innermost output axis handled as a contiguous run when the permutation
// keeps it in place.
struct PermPlan {
  Shape oshape;
  std::vector<int64_t> ostr_in_x;  // x-stride of each output axis
  int64_t inner = 1;               // contiguous run length (1 if none)
  size_t odo_r = 0;                // axes covered by the odometer
  int64_t rows = 1;
};

// fn(ox, oy): offset into x and into the (contiguous) output.
template <class F>
inline void perm_walk(const PermPlan& p, F&& fn) {
  std::vector<int64_t> idx(p.odo_r, 0);
  int64_t ox = 0;
  for (int64_t row = 0; row < p.rows; ++row) {
    fn(ox, row * p.inner);
    for (size_t d = p.odo_r; d-- > 0;) {
      ++idx[d];
      ox += p.ostr_in_x[d];
      if (idx[d] < p.oshape[d]) break;
      ox -= p.ostr_in_x[d] * p.oshape[d];
      idx[d] = 0;
    }
  }
}

}  // namespace detail

template <class T>
TensorT<T> permute(const TensorT<T>& x, const std::vector<int>& perm) {
  size_t r = x.shape().size();
  check(perm.size() == r, "permute: rank mismatch");
  std::vector<char> seen(r, 0);
  for (int p : perm) {
    check(p >= 0 && (size_t)p < r && !seen[p], "permute: invalid permutation");
    seen[p] = 1;
  }
  detail::PermPlan plan;
  plan.oshape.resize(r);
  for (size_t d = 0; d < r; ++d) plan.oshape[d] = x.shape()[(size_t)perm[d]];
  std::vector<int64_t> xstr(r, 1);
  for (size_t d = r - 1; d-- > 0;) xstr[d] = xstr[d + 1] * x.shape()[d + 1];
  plan.ostr_in_x.resize(r);
  for (size_t d = 0; d < r; ++d) plan.ostr_in_x[d] = xstr[(size_t)perm[d]];
  const bool inner_contig = (size_t)perm[r - 1] == r - 1;
  plan.inner = inner_contig ? plan.oshape[r - 1] : 1;
  plan.odo_r = inner_contig ? r - 1 : r;
  plan.rows = 1;
  for (size_t d = 0; d < plan.odo_r; ++d) plan.rows *= plan.oshape[d];

  TensorT<T> out = TensorT<T>::zeros(plan.oshape);
  const T* px = x.data();
  T* py = out.data();
  if (inner_contig) {
    int64_t inner = plan.inner;
    detail::perm_walk(plan, [&](int64_t ox, int64_t oy) {
      std::copy(px + ox, px + ox + inner, py + oy);
    });
  } else {
    detail::perm_walk(plan, [&](int64_t ox, int64_t oy) { py[oy] = px[ox]; });
  }

  if (detail::recording<T>({&x})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("permute", out, [=](const T* g) {
      T* gx = detail::grad_buf(x.impl());
      if (inner_contig) {
        detail::perm_walk(plan, [&](int64_t ox, int64_t oy) {
          kern::table<T>().axpy(T(1), g + oy, gx + ox, plan.inner);
        });
      } else {
        detail::perm_walk(plan,
                          [&](int64_t ox, int64_t oy) { gx[ox] += g[oy]; });
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> concat(const std::vector<TensorT<T>>& xs, int axis) {
  check(!xs.empty(), "concat: no inputs");
  const Shape& s0 = xs[0].shape();
  size_t r = s0.size();
  check(axis >= 0 && (size_t)axis < r, "concat: axis out of range");
  int64_t cat = 0;
  for (const auto& x : xs) {
    check(x.shape().size() == r, "concat: rank mismatch");
    for (size_t d = 0; d < r; ++d)
      if (d != (size_t)axis)
        check(x.shape()[d] == s0[d],
              strfmt("concat: inputs disagree at axis %zu", d));
    cat += x.shape()[(size_t)axis];
  }
  Shape oshape = s0;
  oshape[(size_t)axis] = cat;
  int64_t outer = 1, inner = 1;
  for (size_t d = 0; d < (size_t)axis; ++d) outer *= s0[d];
  for (size_t d = (size_t)axis + 1; d < r; ++d) inner *= s0[d];

  TensorT<T> out = TensorT<T>::zeros(oshape);
  T* py = out.data();
  int64_t off = 0;
  for (const auto& x : xs) {
    int64_t len = x.shape()[(size_t)axis] * inner;
    const T* px = x.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(px + o * len, px + (o + 1) * len, py + o * cat * inner + off);
    off += len;
  }

  bool rec = false;
  if (TapeT<T>::current())
    for (const auto& x : xs) rec = rec || x.requires_grad();
  if (rec) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("concat", out, [=](const T* g) {
      int64_t off2 = 0;
      for (const auto& x : xs) {
        int64_t len = x.shape()[(size_t)axis] * inner;
        if (x.requires_grad()) {
          T* gx = detail::grad_buf(x.impl());
          for (int64_t o = 0; o < outer; ++o)
            kern::table<T>().axpy(T(1), g + o * cat * inner + off2,
                                  gx + o * len, len);
        }
        off2 += len;
      }
    });
  }
  return out;
}

// Full reduction to a scalar (shape {1}).
template <class T>
TensorT<T> sum(const TensorT<T>& x) {
  TensorT<T> out = TensorT<T>::from({1}, {kern::table<T>().sum(x.data(),
                                                               x.numel())});
  if (detail::recording<T>({&x})) {
    out.set_requires_grad(true);
    TapeT<T>::current()->record("sum", out, [=](const T* g) {
      T* gx = detail::grad_buf(x.impl());
      for (int64_t i = 0; i < x.numel(); ++i) gx[i] += g[0];
    });
  }
  return out;
}

}  // namespace whar::ops
