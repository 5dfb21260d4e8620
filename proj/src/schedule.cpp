#include "pgdd/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pgdd/kernels.hpp"

namespace pgdd {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

void check_domain(const NoiseSchedule& s, double t) {
  // Tiny slack absorbs grid arithmetic, not user error.
  if (!(t >= s.t_min - 1e-12 && t <= s.t_max + 1e-12))
    throw std::domain_error("t=" + std::to_string(t) + " outside schedule clamp [" +
                            std::to_string(s.t_min) + ", " + std::to_string(s.t_max) + "]");
}

double cot_half_pi(double t) { return std::cos(kPi * t / 2.0) / std::sin(kPi * t / 2.0); }

// linear-SNR runs lambda linearly between the cosine endpoints of the clamp,
// so both kinds share domain and endpoint behavior.
double lambda_linear(const NoiseSchedule& s, double t) {
  double hi = 2.0 * std::log(cot_half_pi(s.t_min));
  double lo = 2.0 * std::log(cot_half_pi(s.t_max));
  double u = (t - s.t_min) / (s.t_max - s.t_min);
  return hi + (lo - hi) * u;
}

}  // namespace

void NoiseSchedule::validate() const {
  if (!(t_min > 0.0 && t_min < 0.5)) throw std::invalid_argument("schedule t_min must be in (0, 0.5)");
  if (!(t_max > 0.5 && t_max <= 1.0)) throw std::invalid_argument("schedule t_max must be in (0.5, 1]");
}

NoiseSchedule default_schedule() { return NoiseSchedule{}; }

AlphaSigma alpha_sigma(const NoiseSchedule& s, double t) {
  s.validate();
  check_domain(s, t);
  switch (s.kind) {
    case ScheduleKind::cosine: {
      double a = std::cos(kPi * t / 2.0);
      double sg = std::sin(kPi * t / 2.0);
      return {a, sg};
    }
    case ScheduleKind::linear_snr: {
      double lam = lambda_linear(s, t);
      // alpha^2 = sigmoid(lambda), sigma^2 = sigmoid(-lambda).
      double a2 = 1.0 / (1.0 + std::exp(-lam));
      double s2 = 1.0 / (1.0 + std::exp(lam));
      return {std::sqrt(a2), std::sqrt(s2)};
    }
  }
  throw std::logic_error("unreachable schedule kind");
}

double snr(const NoiseSchedule& s, double t) {
  AlphaSigma as = alpha_sigma(s, t);
  return std::log((as.alpha * as.alpha) / (as.sigma * as.sigma));
}

void TimestepGrid::validate(const NoiseSchedule& s) const {
  if (steps.size() < 2) throw std::invalid_argument("timestep grid needs at least 2 points");
  for (size_t i = 1; i < steps.size(); ++i)
    if (!(steps[i] < steps[i - 1])) throw std::invalid_argument("timestep grid must strictly decrease");
  if (std::abs(steps.front() - s.t_max) > 1e-12 || std::abs(steps.back() - s.t_min) > 1e-12)
    throw std::invalid_argument("timestep grid must span [t_max, t_min] of its schedule");
}

TimestepGrid timestep_grid(const NoiseSchedule& s, int n) {
  s.validate();
  if (n < 1) throw std::invalid_argument("timestep grid needs n >= 1 steps");
  TimestepGrid g;
  g.steps.resize(static_cast<size_t>(n) + 1);
  for (int i = 0; i <= n; ++i)
    g.steps[static_cast<size_t>(i)] = s.t_max + (s.t_min - s.t_max) * (static_cast<double>(i) / n);
  g.steps.front() = s.t_max;
  g.steps.back() = s.t_min;
  return g;
}

template <typename T>
TensorT<T> diffuse(const NoiseSchedule& s, const TensorT<T>& x, const TensorT<T>& eps, double t) {
  require_same_shape(x, eps, "diffuse");
  AlphaSigma as = alpha_sigma(s, t);
  TensorT<T> out(x.dims);
  kern::axpby(static_cast<size_t>(x.numel()), static_cast<T>(as.alpha), x.ptr(),
              static_cast<T>(as.sigma), eps.ptr(), out.ptr());
  return out;
}

template <typename T>
TensorT<T> diffuse_per_sample(const NoiseSchedule& s, const TensorT<T>& x, const TensorT<T>& eps,
                              const std::vector<double>& t) {
  require_same_shape(x, eps, "diffuse");
  if (x.dims.empty() || x.dims[0] != static_cast<int64_t>(t.size()))
    throw std::invalid_argument("diffuse: one timestep per batch row required");
  int64_t rows = x.dims[0];
  int64_t row_elems = rows == 0 ? 0 : x.numel() / rows;
  TensorT<T> out(x.dims);
  for (int64_t b = 0; b < rows; ++b) {
    AlphaSigma as = alpha_sigma(s, t[static_cast<size_t>(b)]);
    kern::axpby(static_cast<size_t>(row_elems), static_cast<T>(as.alpha), x.ptr() + b * row_elems,
                static_cast<T>(as.sigma), eps.ptr() + b * row_elems, out.ptr() + b * row_elems);
  }
  return out;
}

template TensorT<float> diffuse(const NoiseSchedule&, const TensorT<float>&, const TensorT<float>&, double);
template TensorT<double> diffuse(const NoiseSchedule&, const TensorT<double>&, const TensorT<double>&, double);
template TensorT<float> diffuse_per_sample(const NoiseSchedule&, const TensorT<float>&, const TensorT<float>&,
                                           const std::vector<double>&);
template TensorT<double> diffuse_per_sample(const NoiseSchedule&, const TensorT<double>&,
                                            const TensorT<double>&, const std::vector<double>&);

}  // namespace pgdd
