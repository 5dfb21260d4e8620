#pragma once

#include <cmath>
#include <vector>

#include "pgdd/kernels.hpp"
#include "pgdd/tensor.hpp"

// Shared layer primitives for the denoiser and guide backbones. Forward
// functions optionally populate caches; backward functions consume them and
// accumulate into grad buffers (callers zero grads between steps).

namespace pgdd::layers {

// y[B,out] = x[B,in] * W[in,out] + b
template <typename T>
TensorT<T> dense(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  int64_t B = x.dims[0], in = x.dims[1], out = w.dims[1];
  TensorT<T> y({B, out});
  kern::gemm_nn(static_cast<size_t>(B), static_cast<size_t>(out), static_cast<size_t>(in), x.ptr(),
                w.ptr(), y.ptr(), false);
  for (int64_t r = 0; r < B; ++r)
    kern::add_inplace(static_cast<size_t>(out), b.ptr(), y.ptr() + r * out);
  return y;
}

// Accumulating variant: y += x*W + b.
template <typename T>
void dense_acc(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, TensorT<T>& y) {
  int64_t B = x.dims[0], in = x.dims[1], out = w.dims[1];
  kern::gemm_nn(static_cast<size_t>(B), static_cast<size_t>(out), static_cast<size_t>(in), x.ptr(),
                w.ptr(), y.ptr(), true);
  for (int64_t r = 0; r < B; ++r)
    kern::add_inplace(static_cast<size_t>(out), b.ptr(), y.ptr() + r * out);
}

// dx (+)= dy*W^T; dw += x^T*dy; db += colsum(dy). Any grad output may be null.
template <typename T>
void dense_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy, TensorT<T>* dx,
                    bool dx_accumulate, TensorT<T>* dw, TensorT<T>* db) {
  int64_t B = x.dims[0], in = x.dims[1], out = w.dims[1];
  if (dx)
    kern::gemm_nt(static_cast<size_t>(B), static_cast<size_t>(in), static_cast<size_t>(out), dy.ptr(),
                  w.ptr(), dx->ptr(), dx_accumulate);
  if (dw)
    kern::gemm_tn(static_cast<size_t>(in), static_cast<size_t>(out), static_cast<size_t>(B), x.ptr(),
                  dy.ptr(), dw->ptr(), true);
  if (db)
    for (int64_t r = 0; r < B; ++r)
      kern::add_inplace(static_cast<size_t>(out), dy.ptr() + r * out, db->ptr());
}

template <typename T>
TensorT<T> silu(const TensorT<T>& x) {
  TensorT<T> y(x.dims);
  kern::silu(static_cast<size_t>(x.numel()), x.ptr(), y.ptr());
  return y;
}

// ===== conv3x3 via im2col (pad 1) =====

inline int64_t conv_out_hw(int64_t in, int stride) { return (in + 2 - 3) / stride + 1; }

// col[Cin*9, Ho*Wo] for one sample x[Cin, H, W].
template <typename T>
void im2col3x3(const T* x, int64_t C, int64_t H, int64_t W, int stride, T* col) {
  int64_t Ho = conv_out_hw(H, stride), Wo = conv_out_hw(W, stride);
  for (int64_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col + ((c * 3 + ky) * 3 + kx) * Ho * Wo;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          int64_t iy = oy * stride + ky - 1;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            int64_t ix = ox * stride + kx - 1;
            dst[oy * Wo + ox] = (iy >= 0 && iy < H && ix >= 0 && ix < W) ? x[(c * H + iy) * W + ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* col, int64_t C, int64_t H, int64_t W, int stride, T* dx_accum) {
  int64_t Ho = conv_out_hw(H, stride), Wo = conv_out_hw(W, stride);
  for (int64_t c = 0; c < C; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col + ((c * 3 + ky) * 3 + kx) * Ho * Wo;
        for (int64_t oy = 0; oy < Ho; ++oy) {
          int64_t iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= H) continue;
          for (int64_t ox = 0; ox < Wo; ++ox) {
            int64_t ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= W) continue;
            dx_accum[(c * H + iy) * W + ix] += src[oy * Wo + ox];
          }
        }
      }
    }
  }
}

// x[B,Cin,H,W] -> y[B,Cout,Ho,Wo]; w[Cout, Cin*9]; col cache [B, Cin*9, Ho*Wo].
template <typename T>
TensorT<T> conv3x3(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, int stride,
                   TensorT<T>* col_cache) {
  int64_t B = x.dims[0], Ci = x.dims[1], H = x.dims[2], W = x.dims[3];
  int64_t Co = w.dims[0];
  int64_t Ho = conv_out_hw(H, stride), Wo = conv_out_hw(W, stride);
  int64_t K = Ci * 9, P = Ho * Wo;
  TensorT<T> y({B, Co, Ho, Wo});
  TensorT<T> local_col;
  TensorT<T>& col = col_cache ? *col_cache : local_col;
  col = TensorT<T>({B, K, P});
  for (int64_t s = 0; s < B; ++s) {
    T* colp = col.ptr() + s * K * P;
    im2col3x3(x.ptr() + s * Ci * H * W, Ci, H, W, stride, colp);
    T* yp = y.ptr() + s * Co * P;
    kern::gemm_nn(static_cast<size_t>(Co), static_cast<size_t>(P), static_cast<size_t>(K), w.ptr(), colp,
                  yp, false);
    for (int64_t c = 0; c < Co; ++c) {
      T bias = b(c);
      T* row = yp + c * P;
      for (int64_t p = 0; p < P; ++p) row[p] += bias;
    }
  }
  return y;
}

template <typename T>
void conv3x3_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& col,
                      const TensorT<T>& dy, int stride, TensorT<T>* dx, bool dx_accumulate,
                      TensorT<T>* dw, TensorT<T>* db) {
  int64_t B = x.dims[0], Ci = x.dims[1], H = x.dims[2], W = x.dims[3];
  int64_t Co = w.dims[0];
  int64_t Ho = conv_out_hw(H, stride), Wo = conv_out_hw(W, stride);
  int64_t K = Ci * 9, P = Ho * Wo;
  if (dx && !dx_accumulate) dx->fill(T(0));
  std::vector<T> dcol(static_cast<size_t>(K * P));
  for (int64_t s = 0; s < B; ++s) {
    const T* colp = col.ptr() + s * K * P;
    const T* dyp = dy.ptr() + s * Co * P;
    if (dw)
      kern::gemm_nt(static_cast<size_t>(Co), static_cast<size_t>(K), static_cast<size_t>(P), dyp, colp,
                    dw->ptr(), true);
    if (db)
      for (int64_t c = 0; c < Co; ++c) {
        T acc = T(0);
        const T* row = dyp + c * P;
        for (int64_t p = 0; p < P; ++p) acc += row[p];
        (*db)(c) += acc;
      }
    if (dx) {
      kern::gemm_tn(static_cast<size_t>(K), static_cast<size_t>(P), static_cast<size_t>(Co), w.ptr(), dyp,
                    dcol.data(), false);
      col2im3x3(dcol.data(), Ci, H, W, stride, dx->ptr() + s * Ci * H * W);
    }
  }
}

// Nearest-neighbor 2x upsample; backward is a 2x2 sum pool.
template <typename T>
TensorT<T> upsample2(const TensorT<T>& x) {
  int64_t B = x.dims[0], C = x.dims[1], H = x.dims[2], W = x.dims[3];
  TensorT<T> y({B, C, H * 2, W * 2});
  for (int64_t s = 0; s < B; ++s)
    for (int64_t c = 0; c < C; ++c) {
      const T* xp = x.ptr() + (s * C + c) * H * W;
      T* yp = y.ptr() + (s * C + c) * 4 * H * W;
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          T v = xp[i * W + j];
          T* row0 = yp + (2 * i) * 2 * W + 2 * j;
          T* row1 = row0 + 2 * W;
          row0[0] = v;
          row0[1] = v;
          row1[0] = v;
          row1[1] = v;
        }
    }
  return y;
}

template <typename T>
TensorT<T> upsample2_backward(const TensorT<T>& dy) {
  int64_t B = dy.dims[0], C = dy.dims[1], H2 = dy.dims[2], W2 = dy.dims[3];
  int64_t H = H2 / 2, W = W2 / 2;
  TensorT<T> dx({B, C, H, W});
  for (int64_t s = 0; s < B; ++s)
    for (int64_t c = 0; c < C; ++c) {
      const T* dyp = dy.ptr() + (s * C + c) * H2 * W2;
      T* dxp = dx.ptr() + (s * C + c) * H * W;
      for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
          const T* row0 = dyp + (2 * i) * W2 + 2 * j;
          const T* row1 = row0 + W2;
          dxp[i * W + j] = row0[0] + row0[1] + row1[0] + row1[1];
        }
    }
  return dx;
}

// Pointwise (1x1) conv: y[s] = w*x[s] + b per pixel; w[Co,Ci].
template <typename T>
TensorT<T> conv1x1(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  int64_t B = x.dims[0], Ci = x.dims[1], P = x.dims[2] * x.dims[3];
  int64_t Co = w.dims[0];
  TensorT<T> y({B, Co, x.dims[2], x.dims[3]});
  for (int64_t s = 0; s < B; ++s) {
    T* yp = y.ptr() + s * Co * P;
    kern::gemm_nn(static_cast<size_t>(Co), static_cast<size_t>(P), static_cast<size_t>(Ci), w.ptr(),
                  x.ptr() + s * Ci * P, yp, false);
    for (int64_t c = 0; c < Co; ++c) {
      T bias = b(c);
      T* row = yp + c * P;
      for (int64_t p = 0; p < P; ++p) row[p] += bias;
    }
  }
  return y;
}

template <typename T>
void conv1x1_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& dy, TensorT<T>* dx,
                      bool dx_accumulate, TensorT<T>* dw, TensorT<T>* db) {
  int64_t B = x.dims[0], Ci = x.dims[1], P = x.dims[2] * x.dims[3];
  int64_t Co = w.dims[0];
  for (int64_t s = 0; s < B; ++s) {
    const T* xp = x.ptr() + s * Ci * P;
    const T* dyp = dy.ptr() + s * Co * P;
    if (dw)
      kern::gemm_nt(static_cast<size_t>(Co), static_cast<size_t>(Ci), static_cast<size_t>(P), dyp, xp,
                    dw->ptr(), true);
    if (db)
      for (int64_t c = 0; c < Co; ++c) {
        T acc = T(0);
        const T* row = dyp + c * P;
        for (int64_t p = 0; p < P; ++p) acc += row[p];
        (*db)(c) += acc;
      }
    if (dx)
      kern::gemm_tn(static_cast<size_t>(Ci), static_cast<size_t>(P), static_cast<size_t>(Co), w.ptr(), dyp,
                    dx->ptr() + s * Ci * P, dx_accumulate);
  }
}

// Broadcast a per-sample channel vector v[B,C] onto y[B,C,H,W].
template <typename T>
void add_channel_bias(const TensorT<T>& v, TensorT<T>& y) {
  int64_t B = y.dims[0], C = y.dims[1], P = y.dims[2] * y.dims[3];
  for (int64_t s = 0; s < B; ++s)
    for (int64_t c = 0; c < C; ++c) {
      T bias = v(s, c);
      T* row = y.ptr() + (s * C + c) * P;
      for (int64_t p = 0; p < P; ++p) row[p] += bias;
    }
}

// dv[B,C] += spatial sum of dy[B,C,H,W].
template <typename T>
void channel_bias_backward(const TensorT<T>& dy, TensorT<T>& dv) {
  int64_t B = dy.dims[0], C = dy.dims[1], P = dy.dims[2] * dy.dims[3];
  for (int64_t s = 0; s < B; ++s)
    for (int64_t c = 0; c < C; ++c) {
      const T* row = dy.ptr() + (s * C + c) * P;
      T acc = T(0);
      for (int64_t p = 0; p < P; ++p) acc += row[p];
      dv(s, c) += acc;
    }
}

// Sinusoidal time features, geometric frequencies; no trainable state.
template <typename T>
TensorT<T> time_features(const std::vector<double>& t, int64_t dim) {
  int64_t half = dim / 2;
  TensorT<T> out({static_cast<int64_t>(t.size()), dim});
  for (size_t s = 0; s < t.size(); ++s) {
    for (int64_t i = 0; i < half; ++i) {
      double omega = std::exp(std::log(1000.0) * (half > 1 ? static_cast<double>(i) / (half - 1) : 0.0));
      double a = omega * t[s];
      out(static_cast<int64_t>(s), 2 * i) = static_cast<T>(std::sin(a));
      out(static_cast<int64_t>(s), 2 * i + 1) = static_cast<T>(std::cos(a));
    }
  }
  return out;
}

}  // namespace pgdd::layers
