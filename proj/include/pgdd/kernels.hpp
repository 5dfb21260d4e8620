#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>

// Data-parallel inner loops. Every kernel has a scalar reference template and,
// for float, an ISA-specific variant (AVX2+FMA on x86-64, NEON on aarch64)
// selected once at process start. The reference path is the semantic contract;
// SIMD variants are equivalence-tested against it.

namespace pgdd::kern {

// ===== scalar reference kernels =====

// out = a*x + b*y
template <typename T>
inline void axpby_ref(size_t n, T a, const T* x, T b, const T* y, T* out) {
  for (size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

// y += x
template <typename T>
inline void add_inplace_ref(size_t n, const T* x, T* y) {
  for (size_t i = 0; i < n; ++i) y[i] += x[i];
}

// out = c + g*(c - u): guided combination of conditional/unconditional eps.
// This form keeps g=0 and c==u exact in floating point.
template <typename T>
inline void guided_combine_ref(size_t n, T g, const T* c, const T* u, T* out) {
  for (size_t i = 0; i < n; ++i) out[i] = c[i] + g * (c[i] - u[i]);
}

template <typename T>
inline double dot_ref(size_t n, const T* x, const T* y) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return acc;
}

template <typename T>
inline double sumsq_ref(size_t n, const T* x) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  return acc;
}

// C[M,N] = A[M,K]*B[K,N] (+C if accumulate), row-major.
template <typename T>
inline void gemm_nn_ref(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool accumulate) {
  for (size_t i = 0; i < M; ++i) {
    T* crow = C + i * N;
    if (!accumulate)
      for (size_t j = 0; j < N; ++j) crow[j] = T(0);
    for (size_t k = 0; k < K; ++k) {
      T a = A[i * K + k];
      const T* brow = B + k * N;
      for (size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

// C[M,N] = A[K,M]^T * B[K,N] (+C), row-major.
template <typename T>
inline void gemm_tn_ref(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool accumulate) {
  if (!accumulate)
    for (size_t i = 0; i < M * N; ++i) C[i] = T(0);
  for (size_t k = 0; k < K; ++k) {
    const T* arow = A + k * M;
    const T* brow = B + k * N;
    for (size_t i = 0; i < M; ++i) {
      T a = arow[i];
      T* crow = C + i * N;
      for (size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
    }
  }
}

// C[M,N] = A[M,K] * B[N,K]^T (+C), row-major.
template <typename T>
inline void gemm_nt_ref(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool accumulate) {
  for (size_t i = 0; i < M; ++i) {
    const T* arow = A + i * K;
    T* crow = C + i * N;
    for (size_t j = 0; j < N; ++j) {
      T acc = accumulate ? crow[j] : T(0);
      const T* brow = B + j * K;
      for (size_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
      crow[j] = acc;
    }
  }
}

struct AdamParams {
  float lr;
  float beta1;
  float beta2;
  float eps;
  float inv_bias1;  // 1/(1 - beta1^t)
  float inv_bias2;  // 1/(1 - beta2^t)
};

inline void adam_step_ref(size_t n, float* w, const float* g, float* m, float* v, const AdamParams& p) {
  for (size_t i = 0; i < n; ++i) {
    m[i] = p.beta1 * m[i] + (1.0f - p.beta1) * g[i];
    v[i] = p.beta2 * v[i] + (1.0f - p.beta2) * g[i] * g[i];
    float mhat = m[i] * p.inv_bias1;
    float vhat = v[i] * p.inv_bias2;
    w[i] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
  }
}

// SiLU stays scalar on every path: it is O(width) next to the O(width^2) GEMMs.
template <typename T>
inline void silu_ref(size_t n, const T* x, T* out) {
  for (size_t i = 0; i < n; ++i) {
    T s = T(1) / (T(1) + std::exp(-x[i]));
    out[i] = x[i] * s;
  }
}

// dx += dy * d(silu)/dx, evaluated at pre-activation x.
template <typename T>
inline void silu_backward_ref(size_t n, const T* x, const T* dy, T* dx) {
  for (size_t i = 0; i < n; ++i) {
    T s = T(1) / (T(1) + std::exp(-x[i]));
    dx[i] += dy[i] * s * (T(1) + x[i] * (T(1) - s));
  }
}

// ===== float fast path, selected at load time =====

struct Ops {
  void (*axpby)(size_t, float, const float*, float, const float*, float*);
  void (*add_inplace)(size_t, const float*, float*);
  void (*guided_combine)(size_t, float, const float*, const float*, float*);
  double (*dot)(size_t, const float*, const float*);
  double (*sumsq)(size_t, const float*);
  void (*gemm_nn)(size_t, size_t, size_t, const float*, const float*, float*, bool);
  void (*gemm_tn)(size_t, size_t, size_t, const float*, const float*, float*, bool);
  void (*gemm_nt)(size_t, size_t, size_t, const float*, const float*, float*, bool);
  void (*adam_step)(size_t, float*, const float*, float*, float*, const AdamParams&);
};

// Selected table. Choice is made once (PGDD_SIMD=scalar forces the reference
// path) and never changes within a process, so runs are self-consistent.
const Ops& ops();
// "avx2", "neon" or "scalar".
const std::string& simd_path();
// Reference table, always available; equivalence tests compare against it.
const Ops& scalar_ops();

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
void axpby(size_t n, float a, const float* x, float b, const float* y, float* out);
void add_inplace(size_t n, const float* x, float* y);
void guided_combine(size_t n, float g, const float* c, const float* u, float* out);
double dot(size_t n, const float* x, const float* y);
double sumsq(size_t n, const float* x);
void gemm_nn(size_t M, size_t N, size_t K, const float* A, const float* B, float* C, bool accumulate);
void gemm_tn(size_t M, size_t N, size_t K, const float* A, const float* B, float* C, bool accumulate);
void gemm_nt(size_t M, size_t N, size_t K, const float* A, const float* B, float* C, bool accumulate);
void adam_step(size_t n, float* w, const float* g, float* m, float* v, const AdamParams& p);
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
void axpby(size_t n, float a, const float* x, float b, const float* y, float* out);
void add_inplace(size_t n, const float* x, float* y);
void guided_combine(size_t n, float g, const float* c, const float* u, float* out);
double dot(size_t n, const float* x, const float* y);
double sumsq(size_t n, const float* x);
void gemm_nn(size_t M, size_t N, size_t K, const float* A, const float* B, float* C, bool accumulate);
void gemm_tn(size_t M, size_t N, size_t K, const float* A, const float* B, float* C, bool accumulate);
void gemm_nt(size_t M, size_t N, size_t K, const float* A, const float* B, float* C, bool accumulate);
void adam_step(size_t n, float* w, const float* g, float* m, float* v, const AdamParams& p);
}  // namespace neon
#endif

// ===== type-dispatched front ends used by the layers =====

template <typename T>
inline void axpby(size_t n, T a, const T* x, T b, const T* y, T* out) {
  if constexpr (std::is_same_v<T, float>)
    ops().axpby(n, a, x, b, y, out);
  else
    axpby_ref(n, a, x, b, y, out);
}

template <typename T>
inline void add_inplace(size_t n, const T* x, T* y) {
  if constexpr (std::is_same_v<T, float>)
    ops().add_inplace(n, x, y);
  else
    add_inplace_ref(n, x, y);
}

template <typename T>
inline void guided_combine(size_t n, T g, const T* c, const T* u, T* out) {
  if constexpr (std::is_same_v<T, float>)
    ops().guided_combine(n, g, c, u, out);
  else
    guided_combine_ref(n, g, c, u, out);
}

template <typename T>
inline double dot(size_t n, const T* x, const T* y) {
  if constexpr (std::is_same_v<T, float>)
    return ops().dot(n, x, y);
  else
    return dot_ref(n, x, y);
}

template <typename T>
inline double sumsq(size_t n, const T* x) {
  if constexpr (std::is_same_v<T, float>)
    return ops().sumsq(n, x);
  else
    return sumsq_ref(n, x);
}

template <typename T>
inline void gemm_nn(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool accumulate) {
  if constexpr (std::is_same_v<T, float>)
    ops().gemm_nn(M, N, K, A, B, C, accumulate);
  else
    gemm_nn_ref(M, N, K, A, B, C, accumulate);
}

template <typename T>
inline void gemm_tn(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool accumulate) {
  if constexpr (std::is_same_v<T, float>)
    ops().gemm_tn(M, N, K, A, B, C, accumulate);
  else
    gemm_tn_ref(M, N, K, A, B, C, accumulate);
}

template <typename T>
inline void gemm_nt(size_t M, size_t N, size_t K, const T* A, const T* B, T* C, bool accumulate) {
  if constexpr (std::is_same_v<T, float>)
    ops().gemm_nt(M, N, K, A, B, C, accumulate);
  else
    gemm_nt_ref(M, N, K, A, B, C, accumulate);
}

template <typename T>
inline void silu(size_t n, const T* x, T* out) {
  silu_ref(n, x, out);
}

template <typename T>
inline void silu_backward(size_t n, const T* x, const T* dy, T* dx) {
  silu_backward_ref(n, x, dy, dx);
}

inline void adam_step(size_t n, float* w, const float* g, float* m, float* v, const AdamParams& p) {
  ops().adam_step(n, w, g, m, v, p);
}

}  // namespace pgdd::kern
