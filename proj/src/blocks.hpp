#pragma once

#include "layers.hpp"
#include "pgdd/network.hpp"

// Backbone building blocks shared by the denoiser and the full guide variant.

namespace pgdd::blocks {

template <typename T>
struct DenseBlockRefs {
  const TensorT<T>*wa, *ba, *wc, *bc, *wb, *bb;
};

template <typename T>
struct DenseBlockGrads {
  TensorT<T>*wa, *ba, *wc, *bc, *wb, *bb;  // all null when params are frozen
};

template <typename T>
struct DenseBlockCache {
  TensorT<T> x, pre_a, u, pre_b;
};

// v = silu(Wb*silu(Wa*x + Wc*cond + biases) + bb); extra (optional) joins the
// first pre-activation (guidance hint path).
template <typename T>
TensorT<T> dense_block(const TensorT<T>& x, const TensorT<T>& cond, const TensorT<T>* extra,
                       const DenseBlockRefs<T>& p, DenseBlockCache<T>* cache) {
  TensorT<T> pre_a = layers::dense(x, *p.wa, *p.ba);
  layers::dense_acc(cond, *p.wc, *p.bc, pre_a);
  if (extra) kern::add_inplace(static_cast<size_t>(pre_a.numel()), extra->ptr(), pre_a.ptr());
  TensorT<T> u = layers::silu(pre_a);
  TensorT<T> pre_b = layers::dense(u, *p.wb, *p.bb);
  TensorT<T> v = layers::silu(pre_b);
  if (cache) {
    cache->x = x;
    cache->pre_a = std::move(pre_a);
    cache->u = std::move(u);
    cache->pre_b = std::move(pre_b);
  }
  return v;
}

// dx += ..., dcond += ..., dextra += ... (any of them null to skip).
template <typename T>
void dense_block_backward(const DenseBlockCache<T>& cache, const TensorT<T>& cond, const TensorT<T>& dv,
                          const DenseBlockRefs<T>& p, const DenseBlockGrads<T>& g, TensorT<T>* dx,
                          TensorT<T>* dcond, TensorT<T>* dextra) {
  TensorT<T> dpre_b(cache.pre_b.dims);
  kern::silu_backward(static_cast<size_t>(dpre_b.numel()), cache.pre_b.ptr(), dv.ptr(), dpre_b.ptr());
  TensorT<T> du(cache.u.dims);
  layers::dense_backward(cache.u, *p.wb, dpre_b, &du, false, g.wb, g.bb);
  TensorT<T> dpre_a(cache.pre_a.dims);
  kern::silu_backward(static_cast<size_t>(dpre_a.numel()), cache.pre_a.ptr(), du.ptr(), dpre_a.ptr());
  if (dx) layers::dense_backward(cache.x, *p.wa, dpre_a, dx, true, g.wa, g.ba);
  else layers::dense_backward(cache.x, *p.wa, dpre_a, static_cast<TensorT<T>*>(nullptr), false, g.wa, g.ba);
  if (dcond) layers::dense_backward(cond, *p.wc, dpre_a, dcond, true, g.wc, g.bc);
  else layers::dense_backward(cond, *p.wc, dpre_a, static_cast<TensorT<T>*>(nullptr), false, g.wc, g.bc);
  if (dextra) kern::add_inplace(static_cast<size_t>(dpre_a.numel()), dpre_a.ptr(), dextra->ptr());
}

template <typename T>
struct ConvBlockRefs {
  const TensorT<T>*w, *b, *wc, *bc;
  int stride;
};

template <typename T>
struct ConvBlockGrads {
  TensorT<T>*w, *b, *wc, *bc;
};

template <typename T>
struct ConvBlockCache {
  TensorT<T> x, col, pre, condv;
};

// out = silu(conv3x3(x) + per-channel(cond*Wc + bc)); extra joins pre-act.
template <typename T>
TensorT<T> conv_block(const TensorT<T>& x, const TensorT<T>& cond, const TensorT<T>* extra,
                      const ConvBlockRefs<T>& p, ConvBlockCache<T>* cache) {
  TensorT<T> col;
  TensorT<T> pre = layers::conv3x3(x, *p.w, *p.b, p.stride, &col);
  TensorT<T> condv = layers::dense(cond, *p.wc, *p.bc);
  layers::add_channel_bias(condv, pre);
  if (extra) kern::add_inplace(static_cast<size_t>(pre.numel()), extra->ptr(), pre.ptr());
  TensorT<T> out(pre.dims);
  kern::silu(static_cast<size_t>(pre.numel()), pre.ptr(), out.ptr());
  if (cache) {
    cache->x = x;
    cache->col = std::move(col);
    cache->pre = std::move(pre);
    cache->condv = std::move(condv);
  }
  return out;
}

template <typename T>
void conv_block_backward(const ConvBlockCache<T>& cache, const TensorT<T>& cond, const TensorT<T>& dout,
                         const ConvBlockRefs<T>& p, const ConvBlockGrads<T>& g, TensorT<T>* dx,
                         bool dx_accumulate, TensorT<T>* dcond, TensorT<T>* dextra) {
  TensorT<T> dpre(cache.pre.dims);
  kern::silu_backward(static_cast<size_t>(dpre.numel()), cache.pre.ptr(), dout.ptr(), dpre.ptr());
  TensorT<T> dcondv({cache.condv.dims[0], cache.condv.dims[1]});
  layers::channel_bias_backward(dpre, dcondv);
  if (dcond) layers::dense_backward(cond, *p.wc, dcondv, dcond, true, g.wc, g.bc);
  else layers::dense_backward(cond, *p.wc, dcondv, static_cast<TensorT<T>*>(nullptr), false, g.wc, g.bc);
  layers::conv3x3_backward(cache.x, *p.w, cache.col, dpre, p.stride, dx, dx_accumulate, g.w, g.b);
  if (dextra) kern::add_inplace(static_cast<size_t>(dpre.numel()), dpre.ptr(), dextra->ptr());
}

}  // namespace pgdd::blocks
