#include "pgdd/distill.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "pgdd/kernels.hpp"
#include "pgdd/util.hpp"

namespace pgdd {

double loss_weight(LossWeighting w, const NoiseSchedule& sched, double t) {
  if (w == LossWeighting::constant_one) return 1.0;
  return std::max(1.0, std::exp(snr(sched, t)));
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (steps < 0) throw std::invalid_argument("steps must be non-negative");
  if (learning_rate < 0.0) throw std::invalid_argument("learning_rate must be non-negative");
  if (!fixed_g && !(g_lo < g_hi)) throw std::invalid_argument("guidance range needs g_lo < g_hi");
  if (cond_dropout_prob < 0.0 || cond_dropout_prob > 1.0)
    throw std::invalid_argument("cond_dropout_prob must lie in [0,1]");
  if (log_every < 1) throw std::invalid_argument("log_every must be positive");
}

void DistillRound::validate() const {
  if (teacher_steps < 2 || teacher_steps % 2 != 0)
    throw std::invalid_argument("teacher_steps must be even and at least 2");
  if (round_index < 0) throw std::invalid_argument("round_index must be non-negative");
}

MetricsLog::MetricsLog(std::string dir) : dir_(std::move(dir)) { ensure_dir(dir_); }

MetricsLog::~MetricsLog() {
  try {
    close();
  } catch (...) {
  }
}

void MetricsLog::record(const std::string& line) {
  if (!enabled()) return;
  metrics_ += line;
  metrics_ += '\n';
}

void MetricsLog::record_timing(const std::string& line) {
  if (!enabled()) return;
  timing_ += line;
  timing_ += '\n';
}

void MetricsLog::close() {
  if (closed_ || !enabled()) {
    closed_ = true;
    return;
  }
  closed_ = true;
  atomic_write_file(dir_ + "/metrics.jsonl", metrics_);
  atomic_write_file(dir_ + "/timing.jsonl", timing_);
}

void AdamState::init(const ParamSet& p) {
  steps = 0;
  m.assign(p.items.size(), {});
  v.assign(p.items.size(), {});
  for (size_t i = 0; i < p.items.size(); ++i) {
    m[i].assign(p.items[i].value.data.size(), 0.0);
    v[i].assign(p.items[i].value.data.size(), 0.0);
  }
}

void AdamState::step(ParamSet& p, double lr) {
  if (!p.grads_allocated()) throw std::logic_error("optimizer step without gradient buffers");
  if (m.size() != p.items.size())
    throw std::logic_error("optimizer state does not match parameter set");
  ++steps;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (size_t i = 0; i < p.items.size(); ++i) {
    auto& val = p.items[i].value.data;
    const auto& gr = p.items[i].grad.data;
    if (m[i].size() != val.size())
      throw std::logic_error("optimizer state does not match parameter set");
    for (size_t e = 0; e < val.size(); ++e) {
      double gg = static_cast<double>(gr[e]);
      m[i][e] = beta1 * m[i][e] + (1.0 - beta1) * gg;
      v[i][e] = beta2 * v[i][e] + (1.0 - beta2) * gg * gg;
      double mh = m[i][e] / c1;
      double vh = v[i][e] / c2;
      val[e] = static_cast<float>(static_cast<double>(val[e]) - lr * mh / (std::sqrt(vh) + eps));
    }
  }
}

namespace {

struct BatchDraw {
  TensorF x;
  std::vector<int> c;
};

BatchDraw draw_batch(const Dataset& data, int batch, RandomStream& rs) {
  const int64_t n = data.size();
  Shape bshape = data.x.dims;
  bshape[0] = batch;
  BatchDraw b{TensorF(bshape), std::vector<int>(static_cast<size_t>(batch))};
  const int64_t row = data.x.numel() / n;
  for (int i = 0; i < batch; ++i) {
    int64_t idx = static_cast<int64_t>(rs.uniform_index(static_cast<uint64_t>(n)));
    std::memcpy(b.x.ptr() + i * row, data.x.ptr() + idx * row,
                static_cast<size_t>(row) * sizeof(float));
    b.c[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(idx)];
  }
  return b;
}

ParamSet clone_values(const ParamSet& src) {
  ParamSet out;
  out.owner = src.owner;
  for (const auto& it : src.items) out.add(it.name, it.value.dims) = it.value;
  return out;
}

void check_data(const DenoiserSpec& spec, const Dataset& data) {
  if (data.x.dims != spec.data_shape(data.size()))
    throw std::invalid_argument("dataset shape " + shape_str(data.x.dims) +
                                " does not match denoiser spec " +
                                shape_str(spec.data_shape(data.size())));
  if (data.num_classes != spec.num_classes)
    throw std::invalid_argument("dataset class count does not match denoiser spec");
}

// Shared core of train_base and finetune_base; params enter by value and are
// trained in place.
ParamSet run_base_training(const DenoiserSpec& spec, ParamSet params, const Dataset& data,
                           const NoiseSchedule& sched, const TrainConfig& cfg, MetricsLog* log,
                           uint64_t substream, const char* tag) {
  spec.validate();
  cfg.validate();
  data.validate();
  check_data(spec, data);
  RandomStream rs(cfg.seed, "training", substream);
  params.alloc_grads();
  AdamState opt;
  opt.init(params);
  const int B = cfg.batch_size;
  for (int step = 0; step < cfg.steps; ++step) {
    BatchDraw b = draw_batch(data, B, rs);
    for (int i = 0; i < B; ++i)
      if (rs.next_double() < cfg.cond_dropout_prob) b.c[static_cast<size_t>(i)] = kNullClass;
    std::vector<double> t(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) t[static_cast<size_t>(i)] = rs.uniform(sched.t_min, sched.t_max);
    TensorF eps(b.x.dims);
    for (auto& v : eps.data) v = static_cast<float>(rs.normal());
    TensorF z = diffuse_per_sample(sched, b.x, eps, t);
    DenoiserCache<float> cache;
    TensorF out = denoiser_forward(spec, params, z, t, b.c, InjectionSet{}, &cache);
    const int64_t row = out.numel() / B;
    TensorF d_out(out.dims);
    double loss = 0.0;
    for (int i = 0; i < B; ++i) {
      double w = loss_weight(cfg.weighting, sched, t[static_cast<size_t>(i)]);
      double se = 0.0;
      for (int64_t d = 0; d < row; ++d) {
        double r = static_cast<double>(out.ptr()[i * row + d]) -
                   static_cast<double>(eps.ptr()[i * row + d]);
        se += r * r;
        d_out.ptr()[i * row + d] = static_cast<float>(w * 2.0 * r / B);
      }
      loss += w * se / B;
    }
    if (!std::isfinite(loss))
      throw std::runtime_error(std::string(tag) + " diverged at step " + std::to_string(step) +
                               ": non-finite loss");
    params.zero_grads();
    denoiser_backward(spec, params, cache, d_out, true);
    opt.step(params, cfg.learning_rate);
    if (log && log->enabled() && (step % cfg.log_every == 0 || step + 1 == cfg.steps))
      log->record(std::string("{\"phase\":\"") + tag + "\",\"step\":" + std::to_string(step) +
                  ",\"loss\":" + fmt_g17(loss) + "}");
  }
  // values only: a trained base must be usable as a frozen teacher directly
  return clone_values(params);
}

int g_bucket(double g) { return g < 4.0 ? 0 : g < 6.0 ? 1 : g < 8.0 ? 2 : 3; }

std::string bucket_line(const char* phase, int step, double loss, const std::array<double, 4>& sum,
                        const std::array<int64_t, 4>& cnt) {
  std::string line = std::string("{\"phase\":\"") + phase + "\",\"step\":" + std::to_string(step) +
                     ",\"loss\":" + fmt_g17(loss) + ",\"bucket_count\":[";
  for (int k = 0; k < 4; ++k) line += (k ? "," : "") + std::to_string(cnt[static_cast<size_t>(k)]);
  line += "],\"bucket_mean\":[";
  for (int k = 0; k < 4; ++k) {
    double mean = cnt[static_cast<size_t>(k)]
                      ? sum[static_cast<size_t>(k)] / static_cast<double>(cnt[static_cast<size_t>(k)])
                      : 0.0;
    line += (k ? "," : "") + fmt_g17(mean);
  }
  line += "]}";
  return line;
}

}  // namespace

ParamSet train_base(const DenoiserSpec& spec, const Dataset& data, const NoiseSchedule& sched,
                    const TrainConfig& cfg, MetricsLog* log) {
  return run_base_training(spec, init_denoiser(spec, cfg.seed), data, sched, cfg, log, 0,
                           "train-base");
}

ParamSet finetune_base(const DenoiserSpec& spec, const ParamSet& base, const Dataset& data,
                       const NoiseSchedule& sched, const TrainConfig& cfg, MetricsLog* log) {
  if (base.owner != "base")
    throw std::invalid_argument("finetune_base needs a parameter set owned by \"base\"");
  if (cfg.steps == 0) return clone_values(base);
  return run_base_training(spec, clone_values(base), data, sched, cfg, log, 2, "finetune");
}

DistillStepStats cfg_distill_step(const DenoiserSpec& spec, const ParamSet& base,
                                  const GuideSpec& gspec, ParamSet& guide, AdamState& opt,
                                  const TensorF& x, const std::vector<int>& c,
                                  const NoiseSchedule& sched, const TrainConfig& cfg,
                                  RandomStream& rng) {
  if (base.grads_allocated())
    throw std::logic_error("frozen base must not carry gradient buffers during distillation");
  const int64_t B = x.dims.empty() ? 0 : x.dims[0];
  if (B < 1 || static_cast<int64_t>(c.size()) != B)
    throw std::invalid_argument("cfg_distill_step needs one condition token per sample");
  if (!guide.grads_allocated()) guide.alloc_grads();

  DistillStepStats st;
  st.c = c;
  st.t.resize(static_cast<size_t>(B));
  st.g.resize(static_cast<size_t>(B));
  st.residual.resize(static_cast<size_t>(B));
  for (auto& ti : st.t) ti = rng.uniform(sched.t_min, sched.t_max);
  if (cfg.fixed_g) {
    for (auto& gi : st.g) gi = cfg.g_value;
  } else {
    for (auto& gi : st.g) gi = rng.uniform(cfg.g_lo, cfg.g_hi);
  }
  TensorF eps(x.dims);
  for (auto& v : eps.data) v = static_cast<float>(rng.normal());
  st.z = diffuse_per_sample(sched, x, eps, st.t);

  // Teacher: two frozen passes, combined per sample in double. Student: one
  // guided pass through the same frozen base.
  TensorF ec = denoiser_forward(spec, base, st.z, st.t, c);
  std::vector<int> nullc(c.size(), kNullClass);
  TensorF eu = denoiser_forward(spec, base, st.z, st.t, nullc);
  GuideCache<float> gc;
  InjectionSet inj = guide_forward(gspec, guide, st.g, st.z, st.t, c, &gc);
  DenoiserCache<float> bc;
  TensorF e = denoiser_forward(spec, base, st.z, st.t, c, inj, &bc);

  const int64_t row = e.numel() / B;
  TensorF d_e(e.dims);
  double loss = 0.0;
  for (int64_t i = 0; i < B; ++i) {
    double w = loss_weight(cfg.weighting, sched, st.t[static_cast<size_t>(i)]);
    double gi = st.g[static_cast<size_t>(i)];
    double se = 0.0;
    for (int64_t d = 0; d < row; ++d) {
      double cd = static_cast<double>(ec.ptr()[i * row + d]);
      double ud = static_cast<double>(eu.ptr()[i * row + d]);
      double target = cd + gi * (cd - ud);
      double ed = static_cast<double>(e.ptr()[i * row + d]);
      se += (target - ed) * (target - ed);
      d_e.ptr()[i * row + d] = static_cast<float>(w * 2.0 * (ed - target) / B);
    }
    st.residual[static_cast<size_t>(i)] = se;
    loss += w * se / B;
  }
  st.loss = loss;
  if (!std::isfinite(loss))
    throw std::runtime_error("cfg distillation produced a non-finite loss");

  InjectionSet dinj;
  denoiser_backward_frozen(spec, base, bc, d_e, &dinj);
  guide.zero_grads();
  guide_backward(gspec, guide, gc, dinj);
  opt.step(guide, cfg.learning_rate);
  return st;
}

ParamSet distill_cfg(const DenoiserSpec& spec, const ParamSet& base, const GuideSpec& gspec,
                     const Dataset& data, const NoiseSchedule& sched, const TrainConfig& cfg,
                     MetricsLog* log) {
  spec.validate();
  gspec.validate();
  cfg.validate();
  data.validate();
  check_data(spec, data);
  if (!(gspec.base == spec))
    throw std::invalid_argument("guide spec targets a different base architecture");
  if (base.owner != "base")
    throw std::invalid_argument("distillation requires a parameter set owned by \"base\", got \"" +
                                base.owner + "\"");
  const uint64_t before = base.value_checksum();
  ParamSet guide = init_guide(gspec, cfg.seed);
  guide.alloc_grads();
  AdamState opt;
  opt.init(guide);
  RandomStream rs(cfg.seed, "training", 1);
  std::array<double, 4> bsum{};
  std::array<int64_t, 4> bcnt{};
  for (int step = 0; step < cfg.steps; ++step) {
    BatchDraw b = draw_batch(data, cfg.batch_size, rs);
    DistillStepStats st = cfg_distill_step(spec, base, gspec, guide, opt, b.x, b.c, sched, cfg, rs);
    for (size_t i = 0; i < st.g.size(); ++i) {
      int k = g_bucket(st.g[i]);
      bsum[static_cast<size_t>(k)] += st.residual[i];
      ++bcnt[static_cast<size_t>(k)];
    }
    if (log && log->enabled() && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      log->record(bucket_line("distill-cfg", step, st.loss, bsum, bcnt));
      bsum = {};
      bcnt = {};
    }
  }
  if (base.value_checksum() != before)
    throw std::logic_error("frozen-base contract violated during cfg distillation");
  return clone_values(guide);
}

ParamSet distill_fixed_guidance(const DenoiserSpec& spec, const ParamSet& base, const GuideSpec& gspec,
                                const Dataset& data, const NoiseSchedule& sched, TrainConfig cfg,
                                double g_fixed, MetricsLog* log) {
  cfg.fixed_g = true;
  cfg.g_value = g_fixed;
  return distill_cfg(spec, base, gspec, data, sched, cfg, log);
}

template <typename T>
TensorT<T> progressive_target(const TeacherFn<T>& teacher, const TensorT<T>& z_t, double t, double s,
                              const TimestepGrid& grid, const NoiseSchedule& sched) {
  grid.validate(sched);
  const auto& st = grid.steps;
  size_t i = st.size();
  for (size_t k = 0; k + 2 < st.size(); ++k) {
    if (std::fabs(st[k] - t) <= 1e-12) {
      i = k;
      break;
    }
  }
  if (i == st.size())
    throw std::invalid_argument("progressive_target: t is not a grid point with two slots below");
  if (std::fabs(st[i + 2] - s) > 1e-12)
    throw std::invalid_argument("progressive_target: s must sit two grid slots below t");
  const double mid = st[i + 1];

  TensorT<T> e1 = teacher(z_t, t);
  TensorT<T> zm = ddim_step(z_t, e1, t, mid, sched);
  TensorT<T> e2 = teacher(zm, mid);
  TensorT<T> zs = ddim_step(zm, e2, mid, s, sched);

  auto [at, sgt] = alpha_sigma(sched, t);
  auto [as, sgs] = alpha_sigma(sched, s);
  const double r = as / at;
  const double denom = sgs - r * sgt;
  if (std::fabs(denom) < 1e-8)
    throw std::domain_error("progressive_target: equal-SNR step, one-step update is not invertible");
  TensorT<T> out(z_t.dims);
  kern::axpby(static_cast<size_t>(out.numel()), static_cast<T>(1.0 / denom), zs.ptr(),
              static_cast<T>(-r / denom), z_t.ptr(), out.ptr());
  return out;
}

template TensorT<float> progressive_target(const TeacherFn<float>&, const TensorT<float>&, double,
                                           double, const TimestepGrid&, const NoiseSchedule&);
template TensorT<double> progressive_target(const TeacherFn<double>&, const TensorT<double>&, double,
                                            double, const TimestepGrid&, const NoiseSchedule&);

ParamSet progressive_distill_round(const DenoiserSpec& spec, const ParamSet& base,
                                   const GuideSpec& gspec, const ParamSet& guide_teacher,
                                   const DistillRound& round, const Dataset& data,
                                   const NoiseSchedule& sched, const TrainConfig& cfg,
                                   MetricsLog* log) {
  round.validate();
  spec.validate();
  gspec.validate();
  cfg.validate();
  data.validate();
  check_data(spec, data);
  if (!(gspec.base == spec))
    throw std::invalid_argument("guide spec targets a different base architecture");
  if (base.owner != "base")
    throw std::invalid_argument("step distillation requires a parameter set owned by \"base\"");
  if (guide_teacher.owner != "guide")
    throw std::invalid_argument("step distillation requires a teacher owned by \"guide\"");
  if (base.grads_allocated())
    throw std::logic_error("frozen base must not carry gradient buffers during distillation");

  const uint64_t before = base.value_checksum();
  ParamSet student = clone_values(guide_teacher);
  student.alloc_grads();
  AdamState opt;
  opt.init(student);
  TimestepGrid tgrid = timestep_grid(sched, round.teacher_steps);
  RandomStream rs(cfg.seed, "training", 10 + static_cast<uint64_t>(round.round_index));
  const int B = cfg.batch_size;
  const uint64_t pairs = static_cast<uint64_t>(round.teacher_steps / 2);
  for (int step = 0; step < cfg.steps; ++step) {
    BatchDraw b = draw_batch(data, B, rs);
    std::vector<double> g(static_cast<size_t>(B));
    if (cfg.fixed_g) {
      for (auto& gi : g) gi = cfg.g_value;
    } else {
      for (auto& gi : g) gi = rs.uniform(cfg.g_lo, cfg.g_hi);
    }
    // t is a student-grid point, addressed through even teacher indices so
    // the inversion below sees bit-identical grid values.
    uint64_t pair = rs.uniform_index(pairs);
    const double t = tgrid.steps[2 * pair];
    const double s = tgrid.steps[2 * pair + 2];
    TensorF eps(b.x.dims);
    for (auto& v : eps.data) v = static_cast<float>(rs.normal());
    TensorF z = diffuse(sched, b.x, eps, t);

    TeacherFn<float> teacher = [&](const TensorF& zz, double tt) {
      std::vector<double> tv(static_cast<size_t>(B), tt);
      InjectionSet ij = guide_forward(gspec, guide_teacher, g, zz, tv, b.c);
      return denoiser_forward(spec, base, zz, tv, b.c, ij);
    };
    TensorF target = progressive_target<float>(teacher, z, t, s, tgrid, sched);

    std::vector<double> tv(static_cast<size_t>(B), t);
    GuideCache<float> gc;
    InjectionSet inj = guide_forward(gspec, student, g, z, tv, b.c, &gc);
    DenoiserCache<float> bc;
    TensorF e = denoiser_forward(spec, base, z, tv, b.c, inj, &bc);

    const int64_t row = e.numel() / B;
    const double w = loss_weight(cfg.weighting, sched, t);
    TensorF d_e(e.dims);
    double loss = 0.0;
    for (int64_t i = 0; i < B; ++i) {
      double se = 0.0;
      for (int64_t d = 0; d < row; ++d) {
        double r = static_cast<double>(target.ptr()[i * row + d]) -
                   static_cast<double>(e.ptr()[i * row + d]);
        se += r * r;
        d_e.ptr()[i * row + d] = static_cast<float>(w * 2.0 * -r / B);
      }
      loss += w * se / B;
    }
    if (!std::isfinite(loss))
      throw std::runtime_error("step distillation round " + std::to_string(round.round_index) +
                               " diverged at step " + std::to_string(step));
    InjectionSet dinj;
    denoiser_backward_frozen(spec, base, bc, d_e, &dinj);
    student.zero_grads();
    guide_backward(gspec, student, gc, dinj);
    opt.step(student, cfg.learning_rate);
    if (log && log->enabled() && (step % cfg.log_every == 0 || step + 1 == cfg.steps))
      log->record("{\"phase\":\"distill-steps\",\"round\":" + std::to_string(round.round_index) +
                  ",\"teacher_steps\":" + std::to_string(round.teacher_steps) +
                  ",\"step\":" + std::to_string(step) + ",\"loss\":" + fmt_g17(loss) + "}");
  }
  if (base.value_checksum() != before)
    throw std::logic_error("frozen-base contract violated during step distillation");
  return clone_values(student);
}

}  // namespace pgdd
