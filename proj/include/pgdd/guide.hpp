#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "pgdd/network.hpp"
#include "pgdd/tensor.hpp"

namespace pgdd {

enum class GuideVariant { full, tiny };

// The externally trained guide that turns (g, t, c[, z]) into per-port
// injections for a frozen denoiser. The full variant mirrors the denoiser's
// encoder and reads z; the tiny variant is a small embedding stack that never
// sees z, so its injections depend on (g, t, c) only (spatially constant in
// image mode).
struct GuideSpec {
  GuideVariant variant = GuideVariant::tiny;
  DenoiserSpec base;
  bool zero_init = true;  // zero the per-port output projections
  int inner_dim = 8;      // tiny-variant internal width

  void validate() const;
  bool operator==(const GuideSpec&) const = default;
};

GuideSpec default_guide_spec(GuideVariant variant, const DenoiserSpec& base);

// Interior layers get fan-in init; port projections are zeroed when
// zero_init, which makes the initial InjectionSet exactly zero everywhere.
ParamSet init_guide(const GuideSpec& gspec, uint64_t seed);

template <typename T>
class GuideCache {
 public:
  GuideCache();
  ~GuideCache();
  GuideCache(GuideCache&&) noexcept;
  GuideCache& operator=(GuideCache&&) noexcept;

  struct Impl;
  Impl& impl() { return *impl_; }
  const Impl& impl() const { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

// g is per-sample. z is read only by the full variant; the tiny variant
// accepts an empty tensor there. Output always has base.num_ports entries
// shaped per port_shapes.
template <typename T>
InjectionSetT<T> guide_forward(const GuideSpec& gspec, const ParamSetT<T>& params,
                               const std::vector<double>& g, const TensorT<T>& z,
                               const std::vector<double>& t, const std::vector<int>& c,
                               GuideCache<T>* cache = nullptr);

// Accumulates parameter gradients from per-port injection gradients. The
// guide never propagates into z (the base backward owns that path).
template <typename T>
void guide_backward(const GuideSpec& gspec, ParamSetT<T>& params, const GuideCache<T>& cache,
                    const InjectionSetT<T>& d_injections);

}  // namespace pgdd
