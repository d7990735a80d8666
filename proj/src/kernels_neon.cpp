// NEON float kernels for aarch64. The transcendental and scan kernels stay on
// the scalar reference; only the plain arithmetic paths are vectorized.

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>
#include <cstddef>

#include "whar/kernels.hpp"

namespace whar::kern {
namespace {

void add_f(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void sub_f(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) y[i] = a[i] - b[i];
}

void mul_f(const float* a, const float* b, float* y, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void adds_f(const float* x, float s, float* y, size_t n) {
  const float32x4_t vs = vdupq_n_f32(s);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(x + i), vs));
  for (; i < n; ++i) y[i] = x[i] + s;
}

void muls_f(const float* x, float s, float* y, size_t n) {
  const float32x4_t vs = vdupq_n_f32(s);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vmulq_f32(vld1q_f32(x + i), vs));
  for (; i < n; ++i) y[i] = x[i] * s;
}

void affine_f(const float* x, float a, float b, float* y, size_t n) {
  // mul+add, not fused: matches the scalar reference bit for bit
  const float32x4_t va = vdupq_n_f32(a);
  const float32x4_t vb = vdupq_n_f32(b);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vaddq_f32(vmulq_f32(vld1q_f32(x + i), va), vb));
  for (; i < n; ++i) y[i] = x[i] * a + b;
}

void axpy_f(float a, const float* x, float* y, size_t n) {
  const float32x4_t va = vdupq_n_f32(a);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), vld1q_f32(x + i), va));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

float dot_f(const float* a, const float* b, size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = vfmaq_f32(acc, vld1q_f32(a + i), vld1q_f32(b + i));
  float r = vaddvq_f32(acc);
  for (; i < n; ++i) r = std::fma(a[i], b[i], r);
  return r;
}

float sum_f(const float* x, size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = vaddq_f32(acc, vld1q_f32(x + i));
  float r = vaddvq_f32(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

float sumsq_f(const float* x, size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t v = vld1q_f32(x + i);
    acc = vfmaq_f32(acc, v, v);
  }
  float r = vaddvq_f32(acc);
  for (; i < n; ++i) r = std::fma(x[i], x[i], r);
  return r;
}

float maxv_f(const float* x, size_t n) {
  float m = x[0];
  size_t i = 0;
  if (n >= 4) {
    float32x4_t vm = vld1q_f32(x);
    for (i = 4; i + 4 <= n; i += 4) vm = vmaxq_f32(vm, vld1q_f32(x + i));
    m = vmaxvq_f32(vm);
  }
  for (; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

void vsqrt_f(const float* x, float* y, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vsqrtq_f32(vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] = std::sqrt(x[i]);
}

void vrecip_f(const float* x, float* y, size_t n) {
  const float32x4_t one = vdupq_n_f32(1.0f);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vdivq_f32(one, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] = 1.0f / x[i];
}

}  // namespace

extern const KernelTable<float> kNeonTable;
const KernelTable<float> kNeonTable = {
    add_f,
    sub_f,
    mul_f,
    adds_f,
    muls_f,
    affine_f,
    axpy_f,
    dot_f,
    sum_f,
    sumsq_f,
    maxv_f,
    scalar::vexp<float>,
    vsqrt_f,
    vrecip_f,
    scalar::gelu_fwd<float>,
    scalar::gelu_bwd<float>,
    scalar::silu_fwd<float>,
    scalar::silu_bwd<float>,
    scalar::softplus_fwd<float>,
    scalar::softplus_bwd<float>,
    scalar::ssm_fwd<float>,
    scalar::ssm_bwd<float>};

}  // namespace whar::kern

#endif  // aarch64 + NEON
