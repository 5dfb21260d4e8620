#include "pgdd/oracle.hpp"

#include <cmath>
#include <stdexcept>

#include "pgdd/network.hpp"

namespace pgdd {

int MixtureSpec::dim() const {
  for (const auto& cls : classes)
    for (const auto& comp : cls) return static_cast<int>(comp.mean.size());
  return 0;
}

void MixtureSpec::validate() const {
  if (classes.empty()) throw std::invalid_argument("mixture needs at least one class");
  const int d = dim();
  if (d < 1) throw std::invalid_argument("mixture needs at least one component");
  for (const auto& cls : classes) {
    if (cls.empty()) throw std::invalid_argument("every class needs at least one component");
    double wsum = 0.0;
    for (const auto& comp : cls) {
      if (static_cast<int>(comp.mean.size()) != d || static_cast<int>(comp.var.size()) != d)
        throw std::invalid_argument("mixture component dimensions disagree");
      for (double v : comp.var)
        if (v <= 0.0) throw std::invalid_argument("mixture variances must be positive");
      if (comp.weight <= 0.0) throw std::invalid_argument("mixture weights must be positive");
      wsum += comp.weight;
    }
    if (std::fabs(wsum - 1.0) > 1e-9)
      throw std::invalid_argument("per-class mixture weights must sum to 1");
  }
}

MixtureSpec ring_mixture(int num_classes, double radius, double var) {
  if (num_classes < 1) throw std::invalid_argument("ring mixture needs K >= 1");
  MixtureSpec mix;
  for (int k = 0; k < num_classes; ++k) {
    double a = 2.0 * M_PI * k / num_classes;
    MixtureComponent comp;
    comp.weight = 1.0;
    comp.mean = {radius * std::cos(a), radius * std::sin(a)};
    comp.var = {var, var};
    mix.classes.push_back({comp});
  }
  return mix;
}

namespace {

struct WeightedComp {
  double log_prior;
  const MixtureComponent* comp;
};

// Component set visible under a condition token: one class, or all classes
// with uniform priors for the null token.
std::vector<WeightedComp> visible_components(const MixtureSpec& mix, int c) {
  std::vector<WeightedComp> out;
  if (c == kNullClass) {
    double log_k = -std::log(static_cast<double>(mix.num_classes()));
    for (const auto& cls : mix.classes)
      for (const auto& comp : cls) out.push_back({log_k + std::log(comp.weight), &comp});
  } else {
    if (c < 0 || c >= mix.num_classes())
      throw std::invalid_argument("mixture class id out of range");
    for (const auto& comp : mix.classes[static_cast<size_t>(c)])
      out.push_back({std::log(comp.weight), &comp});
  }
  return out;
}

// Posterior mean of x given z for one sample; returns log marginal density.
double posterior_mean(const std::vector<WeightedComp>& comps, const double* z, int dim, double a,
                      double s, double* ex) {
  const double s2 = s * s;
  std::vector<double> logp(comps.size());
  double maxlp = -1e300;
  for (size_t j = 0; j < comps.size(); ++j) {
    const MixtureComponent& comp = *comps[j].comp;
    double lp = comps[j].log_prior;
    for (int d = 0; d < dim; ++d) {
      double marg_var = a * a * comp.var[static_cast<size_t>(d)] + s2;
      double diff = z[d] - a * comp.mean[static_cast<size_t>(d)];
      lp += -0.5 * std::log(2.0 * M_PI * marg_var) - diff * diff / (2.0 * marg_var);
    }
    logp[j] = lp;
    if (lp > maxlp) maxlp = lp;
  }
  double norm = 0.0;
  for (double lp : logp) norm += std::exp(lp - maxlp);
  for (int d = 0; d < dim; ++d) ex[d] = 0.0;
  for (size_t j = 0; j < comps.size(); ++j) {
    const MixtureComponent& comp = *comps[j].comp;
    double r = std::exp(logp[j] - maxlp) / norm;
    for (int d = 0; d < dim; ++d) {
      double v = comp.var[static_cast<size_t>(d)];
      double marg_var = a * a * v + s2;
      double m = comp.mean[static_cast<size_t>(d)] +
                 (a * v / marg_var) * (z[d] - a * comp.mean[static_cast<size_t>(d)]);
      ex[d] += r * m;
    }
  }
  return maxlp + std::log(norm);
}

}  // namespace

template <typename T>
TensorT<T> analytic_eps(const MixtureSpec& mix, const TensorT<T>& z, const std::vector<double>& t,
                        const std::vector<int>& c, const NoiseSchedule& sched) {
  mix.validate();
  const int dim = mix.dim();
  const int64_t B = z.dims.empty() ? 0 : z.dims[0];
  if (z.dims != Shape{B, dim})
    throw std::invalid_argument("analytic_eps: z must be [batch, " + std::to_string(dim) + "]");
  if (static_cast<int64_t>(t.size()) != B || static_cast<int64_t>(c.size()) != B)
    throw std::invalid_argument("analytic_eps: one (t, c) per sample");

  TensorT<T> eps(z.dims);
  std::vector<double> zb(static_cast<size_t>(dim)), ex(static_cast<size_t>(dim));
  for (int64_t i = 0; i < B; ++i) {
    auto [a, s] = alpha_sigma(sched, t[static_cast<size_t>(i)]);
    if (s < 1e-8) throw std::domain_error("analytic_eps: sigma below singularity guard");
    auto comps = visible_components(mix, c[static_cast<size_t>(i)]);
    for (int d = 0; d < dim; ++d) zb[static_cast<size_t>(d)] = static_cast<double>(z(i, d));
    posterior_mean(comps, zb.data(), dim, a, s, ex.data());
    for (int d = 0; d < dim; ++d)
      eps(i, d) = static_cast<T>((zb[static_cast<size_t>(d)] - a * ex[static_cast<size_t>(d)]) / s);
  }
  return eps;
}

template <typename T>
TensorT<T> oracle_cfg_target(const MixtureSpec& mix, const TensorT<T>& z, const std::vector<double>& t,
                             const std::vector<int>& c, double g, const NoiseSchedule& sched) {
  TensorT<T> ec = analytic_eps(mix, z, t, c, sched);
  std::vector<int> null_c(c.size(), kNullClass);
  TensorT<T> eu = analytic_eps(mix, z, t, null_c, sched);
  return cfg_combine(ec, eu, g);
}

double diffused_log_density(const MixtureSpec& mix, const double* z, int dim, double t, int c,
                            const NoiseSchedule& sched) {
  mix.validate();
  if (dim != mix.dim()) throw std::invalid_argument("diffused_log_density: wrong dimension");
  auto [a, s] = alpha_sigma(sched, t);
  auto comps = visible_components(mix, c);
  std::vector<double> ex(static_cast<size_t>(dim));
  return posterior_mean(comps, z, dim, a, s, ex.data());
}

SampleTrace oracle_sample(const MixtureSpec& mix, const NoiseSchedule& sched, const TimestepGrid& grid,
                          const std::vector<int>& c, double g, uint64_t seed) {
  mix.validate();
  const int64_t B = static_cast<int64_t>(c.size());
  EpsFn fn = [&](const TensorF& z, double t, std::vector<double>*) {
    std::vector<double> tv(c.size(), t);
    if (g == 0.0) return analytic_eps(mix, z, tv, c, sched);
    return oracle_cfg_target(mix, z, tv, c, g, sched);
  };
  return run_ddim(fn, sched, grid, init_noise({B, mix.dim()}, seed), false);
}

template TensorT<float> analytic_eps(const MixtureSpec&, const TensorT<float>&,
                                     const std::vector<double>&, const std::vector<int>&,
                                     const NoiseSchedule&);
template TensorT<double> analytic_eps(const MixtureSpec&, const TensorT<double>&,
                                      const std::vector<double>&, const std::vector<int>&,
                                      const NoiseSchedule&);
template TensorT<float> oracle_cfg_target(const MixtureSpec&, const TensorT<float>&,
                                          const std::vector<double>&, const std::vector<int>&, double,
                                          const NoiseSchedule&);
template TensorT<double> oracle_cfg_target(const MixtureSpec&, const TensorT<double>&,
                                           const std::vector<double>&, const std::vector<int>&, double,
                                           const NoiseSchedule&);

}  // namespace pgdd
