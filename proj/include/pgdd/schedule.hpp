#pragma once

#include <vector>

#include "pgdd/tensor.hpp"

namespace pgdd {

enum class ScheduleKind { cosine, linear_snr };

// Variance-preserving forward process: z_t = alpha(t)*x + sigma(t)*eps with
// alpha^2 + sigma^2 = 1. Continuous time lives in the clamp [t_min, t_max];
// queries outside it are domain errors, not silent clamps.
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::cosine;
  double t_min = 1e-3;
  double t_max = 1.0 - 1e-3;

  void validate() const;
  bool operator==(const NoiseSchedule&) const = default;
};

struct AlphaSigma {
  double alpha;
  double sigma;
};

NoiseSchedule default_schedule();

AlphaSigma alpha_sigma(const NoiseSchedule& s, double t);

// log-SNR lambda(t) = log(alpha^2 / sigma^2), strictly decreasing in t.
double snr(const NoiseSchedule& s, double t);

// Descending grid of N+1 points from t_max to t_min, uniform in t.
struct TimestepGrid {
  std::vector<double> steps;

  int num_steps() const { return static_cast<int>(steps.size()) - 1; }
  void validate(const NoiseSchedule& s) const;
};

TimestepGrid timestep_grid(const NoiseSchedule& s, int n);

// z_t = alpha_t * x + sigma_t * eps.
template <typename T>
TensorT<T> diffuse(const NoiseSchedule& s, const TensorT<T>& x, const TensorT<T>& eps, double t);

// Per-sample timesteps (training batches carry one t per row).
template <typename T>
TensorT<T> diffuse_per_sample(const NoiseSchedule& s, const TensorT<T>& x, const TensorT<T>& eps,
                              const std::vector<double>& t);

}  // namespace pgdd
