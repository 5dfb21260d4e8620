#if defined(__aarch64__)

#include <arm_neon.h>

#include "pgdd/kernels.hpp"

// NEON variants, mirrors of the AVX2 file at 4-wide. NEON is baseline on
// aarch64 so there is no CPU feature probe beyond the architecture itself.

namespace pgdd::kern::neon {

void axpby(size_t n, float a, const float* x, float b, const float* y, float* out) {
  float32x4_t va = vdupq_n_f32(a);
  float32x4_t vb = vdupq_n_f32(b);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t r = vmulq_f32(vb, vld1q_f32(y + i));
    r = vfmaq_f32(r, va, vld1q_f32(x + i));
    vst1q_f32(out + i, r);
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void add_inplace(size_t n, const float* x, float* y) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] += x[i];
}

void guided_combine(size_t n, float g, const float* c, const float* u, float* out) {
  float32x4_t vg = vdupq_n_f32(g);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t vc = vld1q_f32(c + i);
    float32x4_t diff = vsubq_f32(vc, vld1q_f32(u + i));
    vst1q_f32(out + i, vfmaq_f32(vc, vg, diff));
  }
  for (; i < n; ++i) out[i] = c[i] + g * (c[i] - u[i]);
}

double dot(size_t n, const float* x, const float* y) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t vx = vld1q_f32(x + i);
    float32x4_t vy = vld1q_f32(y + i);
    float64x2_t xlo = vcvt_f64_f32(vget_low_f32(vx));
    float64x2_t xhi = vcvt_f64_f32(vget_high_f32(vx));
    float64x2_t ylo = vcvt_f64_f32(vget_low_f32(vy));
    float64x2_t yhi = vcvt_f64_f32(vget_high_f32(vy));
    acc0 = vfmaq_f64(acc0, xlo, ylo);
    acc1 = vfmaq_f64(acc1, xhi, yhi);
  }
  double acc = vaddvq_f64(acc0) + vaddvq_f64(acc1);
  for (; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return acc;
}

double sumsq(size_t n, const float* x) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t vx = vld1q_f32(x + i);
    float64x2_t lo = vcvt_f64_f32(vget_low_f32(vx));
    float64x2_t hi = vcvt_f64_f32(vget_high_f32(vx));
    acc0 = vfmaq_f64(acc0, lo, lo);
    acc1 = vfmaq_f64(acc1, hi, hi);
  }
  double acc = vaddvq_f64(acc0) + vaddvq_f64(acc1);
  for (; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  return acc;
}

void gemm_nn(size_t M, size_t N, size_t K, const float* A, const float* B, float* C, bool accumulate) {
  for (size_t i = 0; i < M; ++i) {
    float* crow = C + i * N;
    if (!accumulate)
      for (size_t j = 0; j < N; ++j) crow[j] = 0.0f;
    for (size_t k = 0; k < K; ++k) {
      float32x4_t va = vdupq_n_f32(A[i * K + k]);
      const float* brow = B + k * N;
      size_t j = 0;
      for (; j + 4 <= N; j += 4)
        vst1q_f32(crow + j, vfmaq_f32(vld1q_f32(crow + j), va, vld1q_f32(brow + j)));
      float a = A[i * K + k];
      for (; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

void gemm_tn(size_t M, size_t N, size_t K, const float* A, const float* B, float* C, bool accumulate) {
  if (!accumulate)
    for (size_t i = 0; i < M * N; ++i) C[i] = 0.0f;
  for (size_t k = 0; k < K; ++k) {
    const float* arow = A + k * M;
    const float* brow = B + k * N;
    for (size_t i = 0; i < M; ++i) {
      float32x4_t va = vdupq_n_f32(arow[i]);
      float* crow = C + i * N;
      size_t j = 0;
      for (; j + 4 <= N; j += 4)
        vst1q_f32(crow + j, vfmaq_f32(vld1q_f32(crow + j), va, vld1q_f32(brow + j)));
      float a = arow[i];
      for (; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

void gemm_nt(size_t M, size_t N, size_t K, const float* A, const float* B, float* C, bool accumulate) {
  for (size_t i = 0; i < M; ++i) {
    const float* arow = A + i * K;
    float* crow = C + i * N;
    for (size_t j = 0; j < N; ++j) {
      const float* brow = B + j * K;
      float32x4_t vacc = vdupq_n_f32(0.0f);
      size_t k = 0;
      for (; k + 4 <= K; k += 4)
        vacc = vfmaq_f32(vacc, vld1q_f32(arow + k), vld1q_f32(brow + k));
      float acc = vaddvq_f32(vacc);
      for (; k < K; ++k) acc += arow[k] * brow[k];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void adam_step(size_t n, float* w, const float* g, float* m, float* v, const AdamParams& p) {
  // Division and sqrt per lane; NEON has no fast path worth the precision
  // gymnastics at these sizes, so only the elementwise algebra is vectorized.
  float32x4_t vb1 = vdupq_n_f32(p.beta1);
  float32x4_t vb2 = vdupq_n_f32(p.beta2);
  float32x4_t vo1 = vdupq_n_f32(1.0f - p.beta1);
  float32x4_t vo2 = vdupq_n_f32(1.0f - p.beta2);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float32x4_t vg = vld1q_f32(g + i);
    float32x4_t vm = vfmaq_f32(vmulq_f32(vb1, vld1q_f32(m + i)), vo1, vg);
    float32x4_t vv = vfmaq_f32(vmulq_f32(vb2, vld1q_f32(v + i)), vo2, vmulq_f32(vg, vg));
    vst1q_f32(m + i, vm);
    vst1q_f32(v + i, vv);
    float mbuf[4], vbuf[4], wbuf[4];
    vst1q_f32(mbuf, vm);
    vst1q_f32(vbuf, vv);
    vst1q_f32(wbuf, vld1q_f32(w + i));
    for (int lane = 0; lane < 4; ++lane) {
      float mhat = mbuf[lane] * p.inv_bias1;
      float vhat = vbuf[lane] * p.inv_bias2;
      wbuf[lane] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
    }
    vst1q_f32(w + i, vld1q_f32(wbuf));
  }
  for (; i < n; ++i) {
    m[i] = p.beta1 * m[i] + (1.0f - p.beta1) * g[i];
    v[i] = p.beta2 * v[i] + (1.0f - p.beta2) * g[i] * g[i];
    float mhat = m[i] * p.inv_bias1;
    float vhat = v[i] * p.inv_bias2;
    w[i] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
  }
}

}  // namespace pgdd::kern::neon

#endif  // aarch64
