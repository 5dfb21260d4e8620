#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgdd {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) throw std::invalid_argument("negative tensor dim");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. Rank is dynamic but stays at 1..4 in practice.
template <typename T>
struct TensorT {
  Shape dims;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(Shape d) : dims(std::move(d)), data(static_cast<size_t>(shape_numel(dims)), T(0)) {}

  static TensorT zeros(Shape d) { return TensorT(std::move(d)); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  bool same_shape(const TensorT& o) const { return dims == o.dims; }
  bool empty() const { return data.empty(); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator()(int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator()(int64_t i) const { return data[static_cast<size_t>(i)]; }
  T& operator()(int64_t i, int64_t j) { return data[static_cast<size_t>(i * dims[1] + j)]; }
  const T& operator()(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * dims[1] + j)]; }
  T& operator()(int64_t i, int64_t j, int64_t k) {
    return data[static_cast<size_t>((i * dims[1] + j) * dims[2] + k)];
  }
  const T& operator()(int64_t i, int64_t j, int64_t k) const {
    return data[static_cast<size_t>((i * dims[1] + j) * dims[2] + k)];
  }
  T& operator()(int64_t i, int64_t j, int64_t k, int64_t l) {
    return data[static_cast<size_t>(((i * dims[1] + j) * dims[2] + k) * dims[3] + l)];
  }
  const T& operator()(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return data[static_cast<size_t>(((i * dims[1] + j) * dims[2] + k) * dims[3] + l)];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(dims);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
inline void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.dims) + " vs " +
                                shape_str(b.dims));
}

}  // namespace pgdd
