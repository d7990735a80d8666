// AVX2+FMA float kernels. Compiled unconditionally on x86 via per-function
// target attributes; only ever called after a runtime cpuid check.

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "whar/kernels.hpp"

#define WHAR_AVX2 __attribute__((target("avx2,fma")))

namespace whar::kern {
namespace {

WHAR_AVX2 inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 sh = _mm_movehl_ps(lo, lo);
  lo = _mm_add_ps(lo, sh);
  sh = _mm_shuffle_ps(lo, lo, 0x55);
  lo = _mm_add_ss(lo, sh);
  return _mm_cvtss_f32(lo);
}

// exp on 8 lanes, Cephes-style polynomial, ~2 ulp over the clamped range.
WHAR_AVX2 inline __m256 exp256(__m256 x) {
  const __m256 hi = _mm256_set1_ps(88.3762626647949f);
  const __m256 lo = _mm256_set1_ps(-87.3365478515625f);
  const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
  const __m256 c1 = _mm256_set1_ps(0.693359375f);
  const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
  const __m256 one = _mm256_set1_ps(1.0f);

  x = _mm256_min_ps(_mm256_max_ps(x, lo), hi);
  __m256 fx = _mm256_floor_ps(
      _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f)));
  x = _mm256_fnmadd_ps(fx, c1, x);
  x = _mm256_fnmadd_ps(fx, c2, x);

  __m256 y = _mm256_set1_ps(1.9875691500e-4f);
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
  y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
  y = _mm256_fmadd_ps(y, _mm256_mul_ps(x, x), _mm256_add_ps(x, one));

  __m256i n = _mm256_cvtps_epi32(fx);
  n = _mm256_add_epi32(n, _mm256_set1_epi32(0x7f));
  n = _mm256_slli_epi32(n, 23);
  return _mm256_mul_ps(y, _mm256_castsi256_ps(n));
}

// tanh(x) = copysign((1 - t) / (1 + t), x) with t = exp(-2|x|)
WHAR_AVX2 inline __m256 tanh256(__m256 x) {
  const __m256 signmask = _mm256_set1_ps(-0.0f);
  const __m256 one = _mm256_set1_ps(1.0f);
  __m256 sign = _mm256_and_ps(x, signmask);
  __m256 ax = _mm256_andnot_ps(signmask, x);
  __m256 t = exp256(_mm256_mul_ps(ax, _mm256_set1_ps(-2.0f)));
  __m256 r = _mm256_div_ps(_mm256_sub_ps(one, t), _mm256_add_ps(one, t));
  return _mm256_or_ps(r, sign);
}

WHAR_AVX2 void add_f(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

WHAR_AVX2 void sub_f(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

WHAR_AVX2 void mul_f(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

WHAR_AVX2 void adds_f(const float* x, float s, float* y, size_t n) {
  const __m256 vs = _mm256_set1_ps(s);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(x + i), vs));
  for (; i < n; ++i) y[i] = x[i] + s;
}

WHAR_AVX2 void muls_f(const float* x, float s, float* y, size_t n) {
  const __m256 vs = _mm256_set1_ps(s);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), vs));
  for (; i < n; ++i) y[i] = x[i] * s;
}

WHAR_AVX2 void affine_f(const float* x, float a, float b, float* y, size_t n) {
  // mul+add, not fmadd: keeps the lane-wise bit-exactness contract with the
  // scalar reference (which rounds the product before the add)
  const __m256 va = _mm256_set1_ps(a);
  const __m256 vb = _mm256_set1_ps(b);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_add_ps(_mm256_mul_ps(_mm256_loadu_ps(x + i), va), vb));
  for (; i < n; ++i) y[i] = x[i] * a + b;
}

WHAR_AVX2 void axpy_f(float a, const float* x, float* y, size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
    _mm256_storeu_ps(
        y + i + 8, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i + 8),
                                   _mm256_loadu_ps(y + i + 8)));
  }
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

WHAR_AVX2 float dot_f(const float* a, const float* b, size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                           acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8),
                           _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i),
                           acc0);
  float r = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) r = std::fma(a[i], b[i], r);
  return r;
}

WHAR_AVX2 float sum_f(const float* x, size_t n) {
  __m256 acc = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float r = hsum(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

WHAR_AVX2 float sumsq_f(const float* x, size_t n) {
  __m256 acc = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    acc = _mm256_fmadd_ps(v, v, acc);
  }
  float r = hsum(acc);
  for (; i < n; ++i) r = std::fma(x[i], x[i], r);
  return r;
}

WHAR_AVX2 float maxv_f(const float* x, size_t n) {
  float m = x[0];
  size_t i = 0;
  if (n >= 8) {
    __m256 vm = _mm256_loadu_ps(x);
    for (i = 8; i + 8 <= n; i += 8)
      vm = _mm256_max_ps(vm, _mm256_loadu_ps(x + i));
    __m128 lo = _mm_max_ps(_mm256_castps256_ps128(vm),
                           _mm256_extractf128_ps(vm, 1));
    lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 0x55));
    m = _mm_cvtss_f32(lo);
  }
  for (; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

WHAR_AVX2 void vexp_f(const float* x, float* y, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, exp256(_mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = std::exp(x[i]);
}

WHAR_AVX2 void vsqrt_f(const float* x, float* y, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_sqrt_ps(_mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = std::sqrt(x[i]);
}

WHAR_AVX2 void vrecip_f(const float* x, float* y, size_t n) {
  const __m256 one = _mm256_set1_ps(1.0f);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_div_ps(one, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = 1.0f / x[i];
}

WHAR_AVX2 void gelu_fwd_f(const float* x, float* y, float* t, size_t n) {
  const __m256 c = _mm256_set1_ps(0.7978845608028654f);
  const __m256 a = _mm256_set1_ps(0.044715f);
  const __m256 half = _mm256_set1_ps(0.5f);
  const __m256 one = _mm256_set1_ps(1.0f);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vx = _mm256_loadu_ps(x + i);
    __m256 x2 = _mm256_mul_ps(vx, vx);
    __m256 u = _mm256_mul_ps(
        c, _mm256_fmadd_ps(a, _mm256_mul_ps(x2, vx), vx));
    __m256 th = tanh256(u);
    _mm256_storeu_ps(t + i, th);
    _mm256_storeu_ps(
        y + i, _mm256_mul_ps(_mm256_mul_ps(half, vx), _mm256_add_ps(one, th)));
  }
  if (i < n) scalar::gelu_fwd(x + i, y + i, t + i, n - i);
}

WHAR_AVX2 void gelu_bwd_f(const float* g, const float* x, const float* t,
                          float* dx, size_t n) {
  const __m256 c = _mm256_set1_ps(0.7978845608028654f);
  const __m256 a3 = _mm256_set1_ps(3.0f * 0.044715f);
  const __m256 half = _mm256_set1_ps(0.5f);
  const __m256 one = _mm256_set1_ps(1.0f);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vx = _mm256_loadu_ps(x + i);
    __m256 th = _mm256_loadu_ps(t + i);
    __m256 x2 = _mm256_mul_ps(vx, vx);
    __m256 dudx = _mm256_mul_ps(c, _mm256_fmadd_ps(a3, x2, one));
    __m256 sech2 = _mm256_fnmadd_ps(th, th, one);
    __m256 d = _mm256_fmadd_ps(
        _mm256_mul_ps(_mm256_mul_ps(half, vx), sech2), dudx,
        _mm256_mul_ps(half, _mm256_add_ps(one, th)));
    _mm256_storeu_ps(dx + i, _mm256_fmadd_ps(_mm256_loadu_ps(g + i), d,
                                             _mm256_loadu_ps(dx + i)));
  }
  if (i < n) scalar::gelu_bwd(g + i, x + i, t + i, dx + i, n - i);
}

WHAR_AVX2 void silu_fwd_f(const float* x, float* y, float* s, size_t n) {
  const __m256 one = _mm256_set1_ps(1.0f);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vx = _mm256_loadu_ps(x + i);
    __m256 e = exp256(_mm256_sub_ps(_mm256_setzero_ps(), vx));
    __m256 sg = _mm256_div_ps(one, _mm256_add_ps(one, e));
    _mm256_storeu_ps(s + i, sg);
    _mm256_storeu_ps(y + i, _mm256_mul_ps(vx, sg));
  }
  if (i < n) scalar::silu_fwd(x + i, y + i, s + i, n - i);
}

WHAR_AVX2 void silu_bwd_f(const float* g, const float* x, const float* s,
                          float* dx, size_t n) {
  const __m256 one = _mm256_set1_ps(1.0f);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vx = _mm256_loadu_ps(x + i);
    __m256 sg = _mm256_loadu_ps(s + i);
    __m256 d = _mm256_mul_ps(
        sg, _mm256_fmadd_ps(vx, _mm256_sub_ps(one, sg), one));
    _mm256_storeu_ps(dx + i, _mm256_fmadd_ps(_mm256_loadu_ps(g + i), d,
                                             _mm256_loadu_ps(dx + i)));
  }
  if (i < n) scalar::silu_bwd(g + i, x + i, s + i, dx + i, n - i);
}

WHAR_AVX2 void ssm_fwd_f(const float* u, const float* delta, const float* Bt,
                         const float* Ct, const float* A, const float* D,
                         float* y, float* h_hist, float* abar_hist,
                         size_t batch, size_t E, size_t S, size_t Tlen) {
  for (size_t b = 0; b < batch; ++b) {
    for (size_t e = 0; e < E; ++e) {
      const float* Arow = A + e * S;
      const size_t lane = (b * E + e) * Tlen;
      float* hh = h_hist + lane * S;
      float* ab = abar_hist + lane * S;
      float h[64];
      for (size_t s = 0; s < S; ++s) h[s] = 0.0f;
      for (size_t t = 0; t < Tlen; ++t) {
        const float d = delta[lane + t];
        const float du = d * u[lane + t];
        const float* B_t = Bt + (b * Tlen + t) * S;
        const float* C_t = Ct + (b * Tlen + t) * S;
        const __m256 vd = _mm256_set1_ps(d);
        const __m256 vdu = _mm256_set1_ps(du);
        __m256 acc = _mm256_setzero_ps();
        size_t s = 0;
        for (; s + 8 <= S; s += 8) {
          __m256 va = exp256(_mm256_mul_ps(vd, _mm256_loadu_ps(Arow + s)));
          _mm256_storeu_ps(ab + t * S + s, va);
          __m256 vh = _mm256_fmadd_ps(
              va, _mm256_loadu_ps(h + s),
              _mm256_mul_ps(vdu, _mm256_loadu_ps(B_t + s)));
          _mm256_storeu_ps(h + s, vh);
          _mm256_storeu_ps(hh + t * S + s, vh);
          acc = _mm256_fmadd_ps(_mm256_loadu_ps(C_t + s), vh, acc);
        }
        float ya = hsum(acc);
        for (; s < S; ++s) {
          float a = std::exp(d * Arow[s]);
          ab[t * S + s] = a;
          h[s] = a * h[s] + du * B_t[s];
          hh[t * S + s] = h[s];
          ya += C_t[s] * h[s];
        }
        y[lane + t] = ya + D[e] * u[lane + t];
      }
    }
  }
}

WHAR_AVX2 void ssm_bwd_f(const float* u, const float* delta, const float* Bt,
                         const float* Ct, const float* A, const float* D,
                         const float* h_hist, const float* abar_hist,
                         const float* gy, float* du, float* ddelta, float* dB,
                         float* dC, float* dA, float* dD, size_t batch,
                         size_t E, size_t S, size_t Tlen) {
  for (size_t b = 0; b < batch; ++b) {
    for (size_t e = 0; e < E; ++e) {
      const float* Arow = A + e * S;
      float* dArow = dA + e * S;
      const size_t lane = (b * E + e) * Tlen;
      const float* hh = h_hist + lane * S;
      const float* ab = abar_hist + lane * S;
      float lam[64];
      for (size_t s = 0; s < S; ++s) lam[s] = 0.0f;
      for (size_t t = Tlen; t-- > 0;) {
        const float g = gy[lane + t];
        const float d = delta[lane + t];
        const float uv = u[lane + t];
        const float* B_t = Bt + (b * Tlen + t) * S;
        const float* C_t = Ct + (b * Tlen + t) * S;
        float* dB_t = dB + (b * Tlen + t) * S;
        float* dC_t = dC + (b * Tlen + t) * S;
        dD[e] += g * uv;
        const __m256 vg = _mm256_set1_ps(g);
        const __m256 vd = _mm256_set1_ps(d);
        const __m256 vuv = _mm256_set1_ps(uv);
        const __m256 vduv = _mm256_set1_ps(d * uv);
        __m256 vdd = _mm256_setzero_ps();
        __m256 vdu = _mm256_setzero_ps();
        size_t s = 0;
        for (; s + 8 <= S; s += 8) {
          __m256 ht = _mm256_loadu_ps(hh + t * S + s);
          __m256 hp = t > 0 ? _mm256_loadu_ps(hh + (t - 1) * S + s)
                            : _mm256_setzero_ps();
          __m256 va = _mm256_loadu_ps(ab + t * S + s);
          __m256 vB = _mm256_loadu_ps(B_t + s);
          __m256 vC = _mm256_loadu_ps(C_t + s);
          __m256 l = _mm256_fmadd_ps(vg, vC, _mm256_loadu_ps(lam + s));
          _mm256_storeu_ps(dC_t + s,
                           _mm256_fmadd_ps(vg, ht, _mm256_loadu_ps(dC_t + s)));
          __m256 hpa = _mm256_mul_ps(hp, va);
          vdd = _mm256_fmadd_ps(
              l,
              _mm256_fmadd_ps(hpa, _mm256_loadu_ps(Arow + s),
                              _mm256_mul_ps(vB, vuv)),
              vdd);
          _mm256_storeu_ps(
              dArow + s,
              _mm256_fmadd_ps(_mm256_mul_ps(l, hpa), vd,
                              _mm256_loadu_ps(dArow + s)));
          _mm256_storeu_ps(
              dB_t + s, _mm256_fmadd_ps(l, vduv, _mm256_loadu_ps(dB_t + s)));
          vdu = _mm256_fmadd_ps(l, _mm256_mul_ps(vd, vB), vdu);
          _mm256_storeu_ps(lam + s, _mm256_mul_ps(l, va));
        }
        float dd_acc = hsum(vdd);
        float du_acc = g * D[e] + hsum(vdu);
        for (; s < S; ++s) {
          const float h_t = hh[t * S + s];
          const float h_prev = t > 0 ? hh[(t - 1) * S + s] : 0.0f;
          const float a = ab[t * S + s];
          float l = lam[s] + g * C_t[s];
          dC_t[s] += g * h_t;
          dd_acc += l * (h_prev * a * Arow[s] + B_t[s] * uv);
          dArow[s] += l * h_prev * a * d;
          dB_t[s] += l * d * uv;
          du_acc += l * d * B_t[s];
          lam[s] = l * a;
        }
        ddelta[lane + t] += dd_acc;
        du[lane + t] += du_acc;
      }
    }
  }
}

}  // namespace

extern const KernelTable<float> kAvx2Table;
const KernelTable<float> kAvx2Table = {
    add_f,        sub_f,
    mul_f,        adds_f,
    muls_f,       affine_f,
    axpy_f,       dot_f,
    sum_f,        sumsq_f,
    maxv_f,       vexp_f,
    vsqrt_f,      vrecip_f,
    gelu_fwd_f,   gelu_bwd_f,
    silu_fwd_f,   silu_bwd_f,
    scalar::softplus_fwd<float>,  // little data flows through softplus;
    scalar::softplus_bwd<float>,  // the scalar path keeps it exact
    ssm_fwd_f,    ssm_bwd_f};

}  // namespace whar::kern

#endif  // x86
