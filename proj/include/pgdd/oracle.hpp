#pragma once

#include <vector>

#include "pgdd/sampler.hpp"
#include "pgdd/schedule.hpp"
#include "pgdd/tensor.hpp"

namespace pgdd {

// Diagonal-covariance Gaussian mixture data model with one component list per
// class. Gives closed-form eps predictions (a perfectly trained denoiser) for
// validating samplers and distillation targets without any learned weights.
struct MixtureComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> var;  // per-dimension variances
};

struct MixtureSpec {
  std::vector<std::vector<MixtureComponent>> classes;

  int num_classes() const { return static_cast<int>(classes.size()); }
  int dim() const;
  void validate() const;
};

// K unit-weight components evenly spaced on a circle of the given radius.
MixtureSpec ring_mixture(int num_classes, double radius, double var);

// Bayes-optimal eps prediction for the diffused mixture: responsibilities
// over components, posterior mean per component, eps* = (z - a*E[x|z])/s.
// c entries may be kNullClass (marginal over classes, uniform priors).
template <typename T>
TensorT<T> analytic_eps(const MixtureSpec& mix, const TensorT<T>& z, const std::vector<double>& t,
                        const std::vector<int>& c, const NoiseSchedule& sched);

// cfg_combine(analytic conditional, analytic marginal, g).
template <typename T>
TensorT<T> oracle_cfg_target(const MixtureSpec& mix, const TensorT<T>& z, const std::vector<double>& t,
                             const std::vector<int>& c, double g, const NoiseSchedule& sched);

// log q_t(z | c) of the diffused mixture at one point; backs the score-identity
// test eps* = -sigma * d/dz log q_t.
double diffused_log_density(const MixtureSpec& mix, const double* z, int dim, double t, int c,
                            const NoiseSchedule& sched);

// DDIM driven by analytic_eps; same trace contract as sample_cfg.
SampleTrace oracle_sample(const MixtureSpec& mix, const NoiseSchedule& sched, const TimestepGrid& grid,
                          const std::vector<int>& c, double g, uint64_t seed);

}  // namespace pgdd
