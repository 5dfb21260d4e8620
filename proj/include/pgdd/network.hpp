#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "pgdd/tensor.hpp"

namespace pgdd {

enum class Backbone { point2d, image16 };

constexpr int kNullClass = -1;  // condition token for the unconditional branch
constexpr int64_t kImageSize = 16;

// Denoiser architecture description. widths are per-level feature sizes
// (hidden units for point2d, channels for image16); every level owns one
// decoder-side injection port, so num_ports == widths.size().
struct DenoiserSpec {
  Backbone mode = Backbone::point2d;
  std::vector<int> widths;
  int num_classes = 2;
  int embed_dim = 64;
  int num_ports = 3;

  void validate() const;
  Shape data_shape(int64_t batch) const;
  bool operator==(const DenoiserSpec&) const = default;
};

DenoiserSpec default_point2d_spec();
DenoiserSpec default_image16_spec();

// Shapes of the per-port injection tensors for a given batch size.
std::vector<Shape> port_shapes(const DenoiserSpec& spec, int64_t batch);

template <typename T>
struct ParamTensorT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;  // empty until alloc_grads()
};

// Ordered, named parameter collection. Order is creation order and is the
// canonical checkpoint order; checksums walk values in that order.
template <typename T>
struct ParamSetT {
  std::string owner;  // "base" or "guide"
  std::vector<ParamTensorT<T>> items;
  std::unordered_map<std::string, size_t> index;

  TensorT<T>& add(const std::string& name, Shape shape);
  bool has(const std::string& name) const { return index.count(name) != 0; }
  TensorT<T>& value(const std::string& name);
  const TensorT<T>& value(const std::string& name) const;
  TensorT<T>& grad(const std::string& name);

  void alloc_grads();
  void zero_grads();
  bool grads_allocated() const;
  int64_t param_count() const;
  uint64_t value_checksum() const;
};

using ParamSet = ParamSetT<float>;

template <typename U, typename T>
ParamSetT<U> cast_param_set(const ParamSetT<T>& src) {
  ParamSetT<U> out;
  out.owner = src.owner;
  for (const auto& it : src.items) out.add(it.name, it.value.dims) = it.value.template cast<U>();
  return out;
}

// Fan-in-scaled random init; class table rows are drawn small (0.02) so an
// untrained row behaves like a near-null token. Deterministic in (spec, seed).
ParamSet init_denoiser(const DenoiserSpec& spec, uint64_t seed);

// Additive per-port decoder injections. Empty set == no injection.
template <typename T>
struct InjectionSetT {
  std::vector<TensorT<T>> ports;

  bool empty() const { return ports.empty(); }
  size_t size() const { return ports.size(); }
};

using InjectionSet = InjectionSetT<float>;

// Opaque activation cache for one forward call; a backward call consumes it.
template <typename T>
class DenoiserCache {
 public:
  DenoiserCache();
  ~DenoiserCache();
  DenoiserCache(DenoiserCache&&) noexcept;
  DenoiserCache& operator=(DenoiserCache&&) noexcept;

  struct Impl;
  Impl& impl() { return *impl_; }
  const Impl& impl() const { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

// eps prediction. z: [B,2] (point2d) or [B,1,16,16] (image16); t and c are
// per-sample; c entries are class ids in [0,K) or kNullClass. injections must
// be empty or match port_shapes exactly. Pure given (spec, params, inputs).
template <typename T>
TensorT<T> denoiser_forward(const DenoiserSpec& spec, const ParamSetT<T>& params, const TensorT<T>& z,
                            const std::vector<double>& t, const std::vector<int>& c,
                            const InjectionSetT<T>& injections = {}, DenoiserCache<T>* cache = nullptr);

// Backprop from d_eps. Accumulates into params' grad buffers only when
// accumulate_param_grads is set (frozen-base training passes false and reads
// only d_injections, so base gradients are never even materialized).
template <typename T>
void denoiser_backward(const DenoiserSpec& spec, ParamSetT<T>& params, const DenoiserCache<T>& cache,
                       const TensorT<T>& d_eps, bool accumulate_param_grads,
                       InjectionSetT<T>* d_injections = nullptr);

// Frozen-base entry point: yields only d_injections and provably leaves the
// parameter set untouched (it is accepted const and never grows grad buffers).
template <typename T>
void denoiser_backward_frozen(const DenoiserSpec& spec, const ParamSetT<T>& params,
                              const DenoiserCache<T>& cache, const TensorT<T>& d_eps,
                              InjectionSetT<T>* d_injections);

// Embedding views (the forward path computes these internally as well).
template <typename T>
TensorT<T> embed_time(const DenoiserSpec& spec, const ParamSetT<T>& params, const std::vector<double>& t);
template <typename T>
TensorT<T> embed_condition(const DenoiserSpec& spec, const ParamSetT<T>& params, const std::vector<int>& c);

int condition_row(const DenoiserSpec& spec, int c);

}  // namespace pgdd
