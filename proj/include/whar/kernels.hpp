#pragma once

// Low-level dense kernels.
//
// Every kernel has a scalar reference implementation (templated, used for both
// float and double) and may have SIMD variants for float (AVX2 on x86, NEON on
// aarch64). The float table is selected once at startup from CPU capabilities
// and can be overridden with set_backend() or the WHAR_BACKEND environment
// variable ("scalar", "avx2", "neon").
//
// Accuracy contract, checked by the equivalence tests:
//  - lane-wise ops (add/sub/mul/adds/muls/affine/sqrt/recip) match the scalar
//    reference bit for bit,
//  - fused-multiply and reduction ops (axpy/dot/sum/sumsq) match within a few
//    ULP of a double-precision oracle,
//  - transcendental ops (exp, gelu, silu) match the scalar reference within
//    |d| <= 1e-6 + 1e-5*|ref|.
// Backends never change within a run, so results stay reproducible.

#include <cmath>
#include <cstddef>

namespace whar::kern {

enum class Backend { scalar, avx2, neon };

const char* backend_name(Backend b);
bool backend_available(Backend b);
Backend active_backend();
void set_backend(Backend b);  // throws whar::Error if unavailable

template <class T>
struct KernelTable {
  void (*add)(const T* a, const T* b, T* y, size_t n);
  void (*sub)(const T* a, const T* b, T* y, size_t n);
  void (*mul)(const T* a, const T* b, T* y, size_t n);
  void (*adds)(const T* x, T s, T* y, size_t n);            // y = x + s
  void (*muls)(const T* x, T s, T* y, size_t n);            // y = x * s
  void (*affine)(const T* x, T a, T b, T* y, size_t n);     // y = x*a + b
  void (*axpy)(T a, const T* x, T* y, size_t n);            // y += a*x
  T (*dot)(const T* a, const T* b, size_t n);
  T (*sum)(const T* x, size_t n);
  T (*sumsq)(const T* x, size_t n);
  T (*maxv)(const T* x, size_t n);                          // n >= 1
  void (*vexp)(const T* x, T* y, size_t n);
  void (*vsqrt)(const T* x, T* y, size_t n);
  void (*vrecip)(const T* x, T* y, size_t n);
  // gelu (tanh form): saves t = tanh(u) for the backward pass
  void (*gelu_fwd)(const T* x, T* y, T* t, size_t n);
  void (*gelu_bwd)(const T* g, const T* x, const T* t, T* dx, size_t n);
  // silu: saves s = sigmoid(x)
  void (*silu_fwd)(const T* x, T* y, T* s, size_t n);
  void (*silu_bwd)(const T* g, const T* x, const T* s, T* dx, size_t n);
  void (*softplus_fwd)(const T* x, T* y, size_t n);
  void (*softplus_bwd)(const T* g, const T* x, T* dx, size_t n);
  // Selective state-space scan.
  // Layouts: u, delta, y, gy, du, ddelta: (batch, E, T); Bt, Ct, dB, dC:
  // (batch, T, S); A, dA: (E, S); D, dD: (E); h_hist, abar_hist:
  // (batch, E, T, S). All gradient outputs accumulate (+=).
  void (*ssm_fwd)(const T* u, const T* delta, const T* Bt, const T* Ct,
                  const T* A, const T* D, T* y, T* h_hist, T* abar_hist,
                  size_t batch, size_t E, size_t S, size_t Tlen);
  void (*ssm_bwd)(const T* u, const T* delta, const T* Bt, const T* Ct,
                  const T* A, const T* D, const T* h_hist, const T* abar_hist,
                  const T* gy, T* du, T* ddelta, T* dB, T* dC, T* dA, T* dD,
                  size_t batch, size_t E, size_t S, size_t Tlen);
};

// Active table. float resolves through the runtime-selected backend; every
// other scalar type uses the reference implementation below.
template <class T>
const KernelTable<T>& table();

// ============================================================================
// scalar reference implementations
// ============================================================================

namespace scalar {

template <class T>
void add(const T* a, const T* b, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class T>
void sub(const T* a, const T* b, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <class T>
void mul(const T* a, const T* b, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T>
void adds(const T* x, T s, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] + s;
}

template <class T>
void muls(const T* x, T s, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] * s;
}

template <class T>
void affine(const T* x, T a, T b, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] * a + b;
}

template <class T>
void axpy(T a, const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
T dot(const T* a, const T* b, size_t n) {
  T acc = 0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
T sum(const T* x, size_t n) {
  T acc = 0;
  for (size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <class T>
T sumsq(const T* x, size_t n) {
  T acc = 0;
  for (size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

template <class T>
T maxv(const T* x, size_t n) {
  T m = x[0];
  for (size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

template <class T>
void vexp(const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

template <class T>
void vsqrt(const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = std::sqrt(x[i]);
}

template <class T>
void vrecip(const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = T(1) / x[i];
}

// gelu(x) = 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))
template <class T>
inline constexpr T kGeluC = T(0.7978845608028654);  // sqrt(2/pi)
template <class T>
inline constexpr T kGeluA = T(0.044715);

template <class T>
void gelu_fwd(const T* x, T* y, T* t, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    T u = kGeluC<T> * (x[i] + kGeluA<T> * x[i] * x[i] * x[i]);
    T th = std::tanh(u);
    t[i] = th;
    y[i] = T(0.5) * x[i] * (T(1) + th);
  }
}

template <class T>
void gelu_bwd(const T* g, const T* x, const T* t, T* dx, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    T th = t[i];
    T dudx = kGeluC<T> * (T(1) + T(3) * kGeluA<T> * x[i] * x[i]);
    T d = T(0.5) * (T(1) + th) + T(0.5) * x[i] * (T(1) - th * th) * dudx;
    dx[i] += g[i] * d;
  }
}

template <class T>
void silu_fwd(const T* x, T* y, T* s, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    T sg = T(1) / (T(1) + std::exp(-x[i]));
    s[i] = sg;
    y[i] = x[i] * sg;
  }
}

template <class T>
void silu_bwd(const T* g, const T* x, const T* s, T* dx, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    T sg = s[i];
    dx[i] += g[i] * (sg * (T(1) + x[i] * (T(1) - sg)));
  }
}

template <class T>
void softplus_fwd(const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    // log1p(exp(x)) with the standard overflow guard
    y[i] = x[i] > T(20) ? x[i] : std::log1p(std::exp(x[i]));
  }
}

template <class T>
void softplus_bwd(const T* g, const T* x, T* dx, size_t n) {
  for (size_t i = 0; i < n; ++i) dx[i] += g[i] / (T(1) + std::exp(-x[i]));
}

// Selective scan, one (batch, channel) lane at a time:
//   abar[s] = exp(delta_t * A[e,s])
//   h[s]    = abar[s]*h[s] + (delta_t * u_t) * Bt[t,s]
//   y_t     = <Ct[t,:], h> + D[e]*u_t
template <class T>
void ssm_fwd(const T* u, const T* delta, const T* Bt, const T* Ct, const T* A,
             const T* D, T* y, T* h_hist, T* abar_hist, size_t batch, size_t E,
             size_t S, size_t Tlen) {
  for (size_t b = 0; b < batch; ++b) {
    for (size_t e = 0; e < E; ++e) {
      const T* Arow = A + e * S;
      const size_t lane = (b * E + e) * Tlen;
      T* hh = h_hist + lane * S;
      T* ab = abar_hist + lane * S;
      T h[64];  // S <= 64 enforced upstream
      for (size_t s = 0; s < S; ++s) h[s] = 0;
      for (size_t t = 0; t < Tlen; ++t) {
        const T d = delta[lane + t];
        const T du = d * u[lane + t];
        const T* B_t = Bt + (b * Tlen + t) * S;
        const T* C_t = Ct + (b * Tlen + t) * S;
        T acc = 0;
        for (size_t s = 0; s < S; ++s) {
          T a = std::exp(d * Arow[s]);
          ab[t * S + s] = a;
          h[s] = a * h[s] + du * B_t[s];
          hh[t * S + s] = h[s];
          acc += C_t[s] * h[s];
        }
        y[lane + t] = acc + D[e] * u[lane + t];
      }
    }
  }
}

template <class T>
void ssm_bwd(const T* u, const T* delta, const T* Bt, const T* Ct, const T* A,
             const T* D, const T* h_hist, const T* abar_hist, const T* gy,
             T* du, T* ddelta, T* dB, T* dC, T* dA, T* dD, size_t batch,
             size_t E, size_t S, size_t Tlen) {
  for (size_t b = 0; b < batch; ++b) {
    for (size_t e = 0; e < E; ++e) {
      const T* Arow = A + e * S;
      T* dArow = dA + e * S;
      const size_t lane = (b * E + e) * Tlen;
      const T* hh = h_hist + lane * S;
      const T* ab = abar_hist + lane * S;
      T lam[64];
      for (size_t s = 0; s < S; ++s) lam[s] = 0;
      for (size_t t = Tlen; t-- > 0;) {
        const T g = gy[lane + t];
        const T d = delta[lane + t];
        const T uv = u[lane + t];
        const T* B_t = Bt + (b * Tlen + t) * S;
        const T* C_t = Ct + (b * Tlen + t) * S;
        T* dB_t = dB + (b * Tlen + t) * S;
        T* dC_t = dC + (b * Tlen + t) * S;
        dD[e] += g * uv;
        T du_acc = g * D[e];
        T dd_acc = 0;
        for (size_t s = 0; s < S; ++s) {
          const T h_t = hh[t * S + s];
          const T h_prev = t > 0 ? hh[(t - 1) * S + s] : T(0);
          const T a = ab[t * S + s];
          T l = lam[s] + g * C_t[s];
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

}  // namespace scalar

// Reference table used for double (and as the float fallback).
template <class T>
inline const KernelTable<T> kScalarTable = {
    scalar::add<T>,          scalar::sub<T>,          scalar::mul<T>,
    scalar::adds<T>,         scalar::muls<T>,         scalar::affine<T>,
    scalar::axpy<T>,         scalar::dot<T>,          scalar::sum<T>,
    scalar::sumsq<T>,        scalar::maxv<T>,         scalar::vexp<T>,
    scalar::vsqrt<T>,        scalar::vrecip<T>,       scalar::gelu_fwd<T>,
    scalar::gelu_bwd<T>,     scalar::silu_fwd<T>,     scalar::silu_bwd<T>,
    scalar::softplus_fwd<T>, scalar::softplus_bwd<T>, scalar::ssm_fwd<T>,
    scalar::ssm_bwd<T>};

template <class T>
const KernelTable<T>& table() {
  return kScalarTable<T>;
}

// float specialization lives in kernels_dispatch.cpp
template <>
const KernelTable<float>& table<float>();

}  // namespace whar::kern
