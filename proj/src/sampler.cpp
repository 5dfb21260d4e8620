#include "pgdd/sampler.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pgdd/kernels.hpp"
#include "pgdd/rng.hpp"
#include "pgdd/util.hpp"

namespace pgdd {

template <typename T>
TensorT<T> cfg_combine(const TensorT<T>& eps_c, const TensorT<T>& eps_u, double g) {
  require_same_shape(eps_c, eps_u, "cfg_combine");
  TensorT<T> out(eps_c.dims);
  kern::guided_combine(static_cast<size_t>(out.numel()), static_cast<T>(g), eps_c.ptr(), eps_u.ptr(),
                       out.ptr());
  return out;
}

template <typename T>
TensorT<T> ddim_x0(const TensorT<T>& z_t, const TensorT<T>& eps_hat, double t,
                   const NoiseSchedule& sched) {
  require_same_shape(z_t, eps_hat, "ddim_x0");
  auto [at, st] = alpha_sigma(sched, t);
  if (at < 1e-8) throw std::domain_error("ddim_x0: alpha(t) below singularity guard");
  TensorT<T> out(z_t.dims);
  kern::axpby(static_cast<size_t>(out.numel()), static_cast<T>(1.0 / at), z_t.ptr(),
              static_cast<T>(-st / at), eps_hat.ptr(), out.ptr());
  return out;
}

template <typename T>
TensorT<T> ddim_step(const TensorT<T>& z_t, const TensorT<T>& eps_hat, double t, double s,
                     const NoiseSchedule& sched) {
  require_same_shape(z_t, eps_hat, "ddim_step");
  if (s == t) return z_t;
  auto [at, st] = alpha_sigma(sched, t);
  auto [as, ss] = alpha_sigma(sched, s);
  if (at < 1e-8) throw std::domain_error("ddim_step: alpha(t) below singularity guard");
  // z_s = (as/at) z_t + (ss - (as/at) st) eps
  T ca = static_cast<T>(as / at);
  T ce = static_cast<T>(ss - (as / at) * st);
  TensorT<T> out(z_t.dims);
  kern::axpby(static_cast<size_t>(out.numel()), ca, z_t.ptr(), ce, eps_hat.ptr(), out.ptr());
  return out;
}

template TensorT<float> cfg_combine(const TensorT<float>&, const TensorT<float>&, double);
template TensorT<double> cfg_combine(const TensorT<double>&, const TensorT<double>&, double);
template TensorT<float> ddim_x0(const TensorT<float>&, const TensorT<float>&, double,
                                const NoiseSchedule&);
template TensorT<double> ddim_x0(const TensorT<double>&, const TensorT<double>&, double,
                                 const NoiseSchedule&);
template TensorT<float> ddim_step(const TensorT<float>&, const TensorT<float>&, double, double,
                                  const NoiseSchedule&);
template TensorT<double> ddim_step(const TensorT<double>&, const TensorT<double>&, double, double,
                                   const NoiseSchedule&);

TensorF init_noise(const Shape& shape, uint64_t seed) {
  RandomStream rs(seed, "sampling");
  TensorF z(shape);
  for (auto& v : z.data) v = static_cast<float>(rs.normal());
  return z;
}

SampleTrace run_ddim(const EpsFn& eps_fn, const NoiseSchedule& sched, const TimestepGrid& grid,
                     TensorF z_init, bool record_ports) {
  grid.validate(sched);
  SampleTrace trace;
  trace.grid = grid.steps;
  trace.z.push_back(std::move(z_init));
  for (size_t i = 0; i + 1 < grid.steps.size(); ++i) {
    double t = grid.steps[i], s = grid.steps[i + 1];
    std::vector<double> ports;
    TensorF eps = eps_fn(trace.z.back(), t, record_ports ? &ports : nullptr);
    trace.z.push_back(ddim_step(trace.z.back(), eps, t, s, sched));
    trace.eps.push_back(std::move(eps));
    if (record_ports) trace.port_l1.push_back(std::move(ports));
  }
  return trace;
}

void export_trace(const SampleTrace& trace, const std::string& path) {
  std::string out;
  char buf[64];
  for (size_t i = 0; i < trace.eps.size(); ++i) {
    out += "{\"step\":" + std::to_string(i);
    std::snprintf(buf, sizeof(buf), "%.17g", trace.grid[i]);
    out += std::string(",\"t\":") + buf;
    std::snprintf(buf, sizeof(buf), "%.17g", trace.grid[i + 1]);
    out += std::string(",\"t_next\":") + buf;
    if (i < trace.port_l1.size()) {
      out += ",\"port_mean_abs\":[";
      for (size_t p = 0; p < trace.port_l1[i].size(); ++p) {
        std::snprintf(buf, sizeof(buf), "%.17g", trace.port_l1[i][p]);
        out += (p ? "," : "") + std::string(buf);
      }
      out += "]";
    }
    out += "}\n";
  }
  atomic_write_file(path, out);
}

namespace {

std::vector<double> fill_t(size_t n, double t) { return std::vector<double>(n, t); }

double mean_abs(const TensorF& x) {
  double acc = 0.0;
  for (float v : x.data) acc += std::fabs(v);
  return x.numel() ? acc / static_cast<double>(x.numel()) : 0.0;
}

}  // namespace

SampleTrace sample_conditional(const DenoiserSpec& spec, const ParamSet& params,
                               const NoiseSchedule& sched, const TimestepGrid& grid,
                               const std::vector<int>& c, uint64_t seed) {
  const int64_t B = static_cast<int64_t>(c.size());
  EpsFn fn = [&](const TensorF& z, double t, std::vector<double>*) {
    return denoiser_forward(spec, params, z, fill_t(c.size(), t), c);
  };
  return run_ddim(fn, sched, grid, init_noise(spec.data_shape(B), seed), false);
}

SampleTrace sample_cfg(const DenoiserSpec& spec, const ParamSet& params, const NoiseSchedule& sched,
                       const TimestepGrid& grid, const std::vector<int>& c, double g, uint64_t seed) {
  const int64_t B = static_cast<int64_t>(c.size());
  const std::vector<int> null_c(c.size(), kNullClass);
  EpsFn fn = [&](const TensorF& z, double t, std::vector<double>*) {
    auto tv = fill_t(c.size(), t);
    TensorF ec = denoiser_forward(spec, params, z, tv, c);
    TensorF eu = denoiser_forward(spec, params, z, tv, null_c);
    return cfg_combine(ec, eu, g);
  };
  return run_ddim(fn, sched, grid, init_noise(spec.data_shape(B), seed), false);
}

SampleTrace sample_guided(const DenoiserSpec& spec, const ParamSet& base, const GuideSpec& gspec,
                          const ParamSet& guide, const NoiseSchedule& sched, const TimestepGrid& grid,
                          const std::vector<int>& c, double g, uint64_t seed) {
  if (gspec.base != spec)
    throw std::invalid_argument("sample_guided: guide was built for a different denoiser spec");
  const int64_t B = static_cast<int64_t>(c.size());
  const std::vector<double> gv(c.size(), g);
  EpsFn fn = [&](const TensorF& z, double t, std::vector<double>* ports) {
    auto tv = fill_t(c.size(), t);
    InjectionSet inj = guide_forward(gspec, guide, gv, z, tv, c);
    if (ports)
      for (const auto& p : inj.ports) ports->push_back(mean_abs(p));
    return denoiser_forward(spec, base, z, tv, c, inj);
  };
  return run_ddim(fn, sched, grid, init_noise(spec.data_shape(B), seed), true);
}

}  // namespace pgdd
