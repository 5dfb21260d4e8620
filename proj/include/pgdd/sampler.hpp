#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pgdd/guide.hpp"
#include "pgdd/network.hpp"
#include "pgdd/schedule.hpp"
#include "pgdd/tensor.hpp"

namespace pgdd {

// (1+g)*eps_c - g*eps_u, computed as eps_c + g*(eps_c - eps_u) so g=0 and
// eps_c==eps_u are exact in float.
template <typename T>
TensorT<T> cfg_combine(const TensorT<T>& eps_c, const TensorT<T>& eps_u, double g);

// Predicted clean sample (z_t - sigma*eps)/alpha.
template <typename T>
TensorT<T> ddim_x0(const TensorT<T>& z_t, const TensorT<T>& eps_hat, double t,
                   const NoiseSchedule& sched);

// Deterministic DDIM update t -> s via the predicted clean sample. s == t
// returns z_t unchanged (bitwise). alpha(t) below 1e-8 is a hard error.
template <typename T>
TensorT<T> ddim_step(const TensorT<T>& z_t, const TensorT<T>& eps_hat, double t, double s,
                     const NoiseSchedule& sched);

// Full per-step record of one sampling run. port_l1[i][p] is the mean
// absolute injection at step i, port p; empty when sampling without a guide.
struct SampleTrace {
  std::vector<double> grid;  // N+1 decreasing timesteps
  std::vector<TensorF> z;    // N+1 states; front() is the initial noise
  std::vector<TensorF> eps;  // N predictions
  std::vector<std::vector<double>> port_l1;

  const TensorF& final_sample() const { return z.back(); }
  size_t steps() const { return eps.size(); }
};

// One line per step: step index, t-from/t-to, per-port injection magnitudes.
void export_trace(const SampleTrace& trace, const std::string& path);

// Initial noise depends only on (shape, seed): every sampling mode starting
// from the same seed sees the same z_init.
TensorF init_noise(const Shape& shape, uint64_t seed);

// eps_fn(z, t, port_sink) -> eps_hat; port_sink non-null when the caller
// wants per-port magnitudes recorded.
using EpsFn = std::function<TensorF(const TensorF&, double, std::vector<double>*)>;

SampleTrace run_ddim(const EpsFn& eps_fn, const NoiseSchedule& sched, const TimestepGrid& grid,
                     TensorF z_init, bool record_ports);

// Single conditional pass per step, no guidance.
SampleTrace sample_conditional(const DenoiserSpec& spec, const ParamSet& params,
                               const NoiseSchedule& sched, const TimestepGrid& grid,
                               const std::vector<int>& c, uint64_t seed);

// Two passes per step (conditional + null) combined with guidance g.
SampleTrace sample_cfg(const DenoiserSpec& spec, const ParamSet& params, const NoiseSchedule& sched,
                       const TimestepGrid& grid, const std::vector<int>& c, double g, uint64_t seed);

// One guide pass + one injected base pass per step.
SampleTrace sample_guided(const DenoiserSpec& spec, const ParamSet& base, const GuideSpec& gspec,
                          const ParamSet& guide, const NoiseSchedule& sched, const TimestepGrid& grid,
                          const std::vector<int>& c, double g, uint64_t seed);

}  // namespace pgdd
