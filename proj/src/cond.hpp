#pragma once

// Shared time/class conditioning path: cond = fc2(silu(fc1(timefeats))) + table[row].
// Both the denoiser and the full guide own an instance of these parameters
// ("time.fc1.*", "time.fc2.*", "cls.table").

#include <vector>

#include "layers.hpp"
#include "pgdd/kernels.hpp"
#include "pgdd/network.hpp"
#include "pgdd/tensor.hpp"

namespace pgdd::cond {

template <typename T>
struct CondPath {
  TensorT<T> feats, pre1, h1, cond;
  std::vector<int> rows;
};

inline int resolve_row(int num_classes, int c) {
  if (c == kNullClass) return num_classes;
  if (c < 0 || c >= num_classes)
    throw std::invalid_argument("class id " + std::to_string(c) + " outside [0," +
                                std::to_string(num_classes) + ")");
  return c;
}

template <typename T>
CondPath<T> forward(const ParamSetT<T>& params, int embed_dim, int num_classes,
                    const std::vector<double>& t, const std::vector<int>& c) {
  CondPath<T> cp;
  cp.feats = layers::time_features<T>(t, embed_dim);
  cp.pre1 = layers::dense(cp.feats, params.value("time.fc1.w"), params.value("time.fc1.b"));
  cp.h1 = layers::silu(cp.pre1);
  cp.cond = layers::dense(cp.h1, params.value("time.fc2.w"), params.value("time.fc2.b"));
  const TensorT<T>& table = params.value("cls.table");
  const int64_t E = embed_dim;
  cp.rows.resize(c.size());
  for (size_t i = 0; i < c.size(); ++i) {
    int row = resolve_row(num_classes, c[i]);
    cp.rows[i] = row;
    kern::add_inplace(static_cast<size_t>(E), table.ptr() + row * E,
                      cp.cond.ptr() + static_cast<int64_t>(i) * E);
  }
  return cp;
}

template <typename T>
void backward(ParamSetT<T>& params, const CondPath<T>& cp, const TensorT<T>& dcond) {
  const int64_t E = dcond.dims[1];
  TensorT<T>& dtable = params.grad("cls.table");
  for (size_t i = 0; i < cp.rows.size(); ++i)
    kern::add_inplace(static_cast<size_t>(E), dcond.ptr() + static_cast<int64_t>(i) * E,
                      dtable.ptr() + cp.rows[i] * E);
  TensorT<T> dh1(cp.h1.dims);
  layers::dense_backward(cp.h1, params.value("time.fc2.w"), dcond, &dh1, false,
                         &params.grad("time.fc2.w"), &params.grad("time.fc2.b"));
  TensorT<T> dpre1(cp.pre1.dims);
  kern::silu_backward(static_cast<size_t>(dpre1.numel()), cp.pre1.ptr(), dh1.ptr(), dpre1.ptr());
  layers::dense_backward(cp.feats, params.value("time.fc1.w"), dpre1, static_cast<TensorT<T>*>(nullptr),
                         false, &params.grad("time.fc1.w"), &params.grad("time.fc1.b"));
}

}  // namespace pgdd::cond
