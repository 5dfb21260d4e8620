#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "pgdd/kernels.hpp"

// AVX2+FMA variants. Same contracts as the *_ref templates; remainders are
// handled with scalar tails. This TU is compiled with -mavx2 -mfma and only
// entered when the dispatcher has checked CPU support.

namespace pgdd::kern::avx2 {

void axpby(size_t n, float a, const float* x, float b, const float* y, float* out) {
  __m256 va = _mm256_set1_ps(a);
  __m256 vb = _mm256_set1_ps(b);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vx = _mm256_loadu_ps(x + i);
    __m256 vy = _mm256_loadu_ps(y + i);
    _mm256_storeu_ps(out + i, _mm256_fmadd_ps(va, vx, _mm256_mul_ps(vb, vy)));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void add_inplace(size_t n, const float* x, float* y) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vy = _mm256_loadu_ps(y + i);
    _mm256_storeu_ps(y + i, _mm256_add_ps(vy, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

void guided_combine(size_t n, float g, const float* c, const float* u, float* out) {
  __m256 vg = _mm256_set1_ps(g);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vc = _mm256_loadu_ps(c + i);
    __m256 vu = _mm256_loadu_ps(u + i);
    _mm256_storeu_ps(out + i, _mm256_fmadd_ps(vg, _mm256_sub_ps(vc, vu), vc));
  }
  for (; i < n; ++i) out[i] = c[i] + g * (c[i] - u[i]);
}

namespace {

inline double reduce_pd(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swap = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swap));
}

}  // namespace

double dot(size_t n, const float* x, const float* y) {
  // Accumulate in double to track the reference semantics.
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vx = _mm256_loadu_ps(x + i);
    __m256 vy = _mm256_loadu_ps(y + i);
    __m256d xlo = _mm256_cvtps_pd(_mm256_castps256_ps128(vx));
    __m256d xhi = _mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1));
    __m256d ylo = _mm256_cvtps_pd(_mm256_castps256_ps128(vy));
    __m256d yhi = _mm256_cvtps_pd(_mm256_extractf128_ps(vy, 1));
    acc0 = _mm256_fmadd_pd(xlo, ylo, acc0);
    acc1 = _mm256_fmadd_pd(xhi, yhi, acc1);
  }
  double acc = reduce_pd(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return acc;
}

double sumsq(size_t n, const float* x) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vx = _mm256_loadu_ps(x + i);
    __m256d lo = _mm256_cvtps_pd(_mm256_castps256_ps128(vx));
    __m256d hi = _mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1));
    acc0 = _mm256_fmadd_pd(lo, lo, acc0);
    acc1 = _mm256_fmadd_pd(hi, hi, acc1);
  }
  double acc = reduce_pd(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  return acc;
}

void gemm_nn(size_t M, size_t N, size_t K, const float* A, const float* B, float* C, bool accumulate) {
  for (size_t i = 0; i < M; ++i) {
    float* crow = C + i * N;
    if (!accumulate) {
      size_t j = 0;
      __m256 vz = _mm256_setzero_ps();
      for (; j + 8 <= N; j += 8) _mm256_storeu_ps(crow + j, vz);
      for (; j < N; ++j) crow[j] = 0.0f;
    }
    for (size_t k = 0; k < K; ++k) {
      __m256 va = _mm256_set1_ps(A[i * K + k]);
      const float* brow = B + k * N;
      size_t j = 0;
      for (; j + 16 <= N; j += 16) {
        __m256 c0 = _mm256_loadu_ps(crow + j);
        __m256 c1 = _mm256_loadu_ps(crow + j + 8);
        c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), c0);
        c1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j + 8), c1);
        _mm256_storeu_ps(crow + j, c0);
        _mm256_storeu_ps(crow + j + 8, c1);
      }
      for (; j + 8 <= N; j += 8) {
        __m256 c0 = _mm256_loadu_ps(crow + j);
        _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), c0));
      }
      float a = A[i * K + k];
      for (; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

void gemm_tn(size_t M, size_t N, size_t K, const float* A, const float* B, float* C, bool accumulate) {
  if (!accumulate) {
    size_t i = 0;
    __m256 vz = _mm256_setzero_ps();
    for (; i + 8 <= M * N; i += 8) _mm256_storeu_ps(C + i, vz);
    for (; i < M * N; ++i) C[i] = 0.0f;
  }
  for (size_t k = 0; k < K; ++k) {
    const float* arow = A + k * M;
    const float* brow = B + k * N;
    for (size_t i = 0; i < M; ++i) {
      __m256 va = _mm256_set1_ps(arow[i]);
      float* crow = C + i * N;
      size_t j = 0;
      for (; j + 8 <= N; j += 8) {
        __m256 c0 = _mm256_loadu_ps(crow + j);
        _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), c0));
      }
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
      __m256 vacc = _mm256_setzero_ps();
      size_t k = 0;
      for (; k + 8 <= K; k += 8)
        vacc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + k), _mm256_loadu_ps(brow + k), vacc);
      __m128 lo = _mm256_castps256_ps128(vacc);
      __m128 hi = _mm256_extractf128_ps(vacc, 1);
      lo = _mm_add_ps(lo, hi);
      lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
      lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 1));
      float acc = _mm_cvtss_f32(lo);
      for (; k < K; ++k) acc += arow[k] * brow[k];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void adam_step(size_t n, float* w, const float* g, float* m, float* v, const AdamParams& p) {
  __m256 vb1 = _mm256_set1_ps(p.beta1);
  __m256 vb2 = _mm256_set1_ps(p.beta2);
  __m256 vo1 = _mm256_set1_ps(1.0f - p.beta1);
  __m256 vo2 = _mm256_set1_ps(1.0f - p.beta2);
  __m256 vlr = _mm256_set1_ps(p.lr);
  __m256 veps = _mm256_set1_ps(p.eps);
  __m256 vib1 = _mm256_set1_ps(p.inv_bias1);
  __m256 vib2 = _mm256_set1_ps(p.inv_bias2);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vg = _mm256_loadu_ps(g + i);
    __m256 vm = _mm256_fmadd_ps(vo1, vg, _mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)));
    __m256 vv = _mm256_fmadd_ps(vo2, _mm256_mul_ps(vg, vg), _mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)));
    _mm256_storeu_ps(m + i, vm);
    _mm256_storeu_ps(v + i, vv);
    __m256 mhat = _mm256_mul_ps(vm, vib1);
    __m256 vhat = _mm256_mul_ps(vv, vib2);
    __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
    __m256 vw = _mm256_loadu_ps(w + i);
    _mm256_storeu_ps(w + i, _mm256_sub_ps(vw, _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom)));
  }
  for (; i < n; ++i) {
    m[i] = p.beta1 * m[i] + (1.0f - p.beta1) * g[i];
    v[i] = p.beta2 * v[i] + (1.0f - p.beta2) * g[i] * g[i];
    float mhat = m[i] * p.inv_bias1;
    float vhat = v[i] * p.inv_bias2;
    w[i] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
  }
}

}  // namespace pgdd::kern::avx2

#endif  // x86_64
