#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pgdd/dataset.hpp"
#include "pgdd/guide.hpp"
#include "pgdd/network.hpp"
#include "pgdd/rng.hpp"
#include "pgdd/sampler.hpp"
#include "pgdd/schedule.hpp"

namespace pgdd {

enum class LossWeighting { constant_one, truncated_snr };

// Per-sample objective weight. truncated_snr is max(1, alpha^2/sigma^2).
double loss_weight(LossWeighting w, const NoiseSchedule& sched, double t);

// Knobs shared by every training loop. Guidance is drawn per sample from
// [g_lo, g_hi] unless fixed_g pins it to g_value.
struct TrainConfig {
  int batch_size = 64;
  int steps = 2000;
  double learning_rate = 2e-4;
  uint64_t seed = 0;
  LossWeighting weighting = LossWeighting::constant_one;
  double g_lo = 2.0;
  double g_hi = 9.0;
  bool fixed_g = false;
  double g_value = 8.0;
  double cond_dropout_prob = 0.1;
  int log_every = 50;

  void validate() const;
};

// One grid-halving round: teacher samples in teacher_steps DDIM steps, the
// student must cover the same interval in teacher_steps/2.
struct DistillRound {
  int teacher_steps = 0;
  int round_index = 0;

  int student_steps() const { return teacher_steps / 2; }
  void validate() const;
};

// Two-file metrics sink. metrics.jsonl holds only fields that are pure
// functions of (config, seed); reruns must reproduce it byte for byte.
// timing.jsonl takes wall-clock lines and is exempt from that contract.
// Lines buffer in memory and land atomically on close().
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(std::string dir);
  ~MetricsLog();
  MetricsLog(const MetricsLog&) = delete;
  MetricsLog& operator=(const MetricsLog&) = delete;

  bool enabled() const { return !dir_.empty(); }
  void record(const std::string& line);
  void record_timing(const std::string& line);
  void close();

 private:
  std::string dir_;
  std::string metrics_;
  std::string timing_;
  bool closed_ = false;
};

// Adam moments, kept in double and aligned with the owning set's item order.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t steps = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void init(const ParamSet& p);
  void step(ParamSet& p, double lr);
};

// Summary plus batch echo from one distillation step; the echo lets callers
// recompute the objective independently.
struct DistillStepStats {
  double loss = 0.0;               // weighted batch-mean objective
  std::vector<double> g;           // per-sample guidance drawn
  std::vector<double> t;           // per-sample timestep drawn
  std::vector<double> residual;    // per-sample ||teacher - student||^2, double accumulation
  TensorF z;                       // diffused batch fed to both passes
  std::vector<int> c;              // condition tokens
};

// Denoising objective with condition dropout, fresh init from cfg.seed.
// Aborts with a diagnostic if the loss goes non-finite. All training entry
// points hand back values-only sets (no gradient buffers), so the result can
// serve as a frozen teacher without a checkpoint round trip.
ParamSet train_base(const DenoiserSpec& spec, const Dataset& data, const NoiseSchedule& sched,
                    const TrainConfig& cfg, MetricsLog* log = nullptr);

// Continues training existing weights on a (shifted) dataset; steps == 0
// returns the input set unchanged.
ParamSet finetune_base(const DenoiserSpec& spec, const ParamSet& base, const Dataset& data,
                       const NoiseSchedule& sched, const TrainConfig& cfg, MetricsLog* log = nullptr);

// One distillation step on a given batch: two-pass guidance teacher on the
// frozen base, one-pass guided student, L2 in eps space, update on the guide
// only. The base may not even carry gradient buffers here; that is enforced.
// Residual and loss are accumulated in double from the float passes.
DistillStepStats cfg_distill_step(const DenoiserSpec& spec, const ParamSet& base,
                                  const GuideSpec& gspec, ParamSet& guide, AdamState& opt,
                                  const TensorF& x, const std::vector<int>& c,
                                  const NoiseSchedule& sched, const TrainConfig& cfg,
                                  RandomStream& rng);

// Full guide training run: fresh zero-init guide, batches drawn from data,
// per-sample guidance, g-bucket loss metrics. Verifies the base checksum is
// unchanged before returning.
ParamSet distill_cfg(const DenoiserSpec& spec, const ParamSet& base, const GuideSpec& gspec,
                     const Dataset& data, const NoiseSchedule& sched, const TrainConfig& cfg,
                     MetricsLog* log = nullptr);

// distill_cfg with guidance pinned to one value for every sample.
ParamSet distill_fixed_guidance(const DenoiserSpec& spec, const ParamSet& base, const GuideSpec& gspec,
                                const Dataset& data, const NoiseSchedule& sched, TrainConfig cfg,
                                double g_fixed = 8.0, MetricsLog* log = nullptr);

template <typename T>
using TeacherFn = std::function<TensorT<T>(const TensorT<T>&, double)>;

// The eps a one-step student must predict to land on the teacher's two-step
// DDIM endpoint: run t -> mid -> s on the grid, then invert the single-step
// update. t and s must sit exactly two grid slots apart; a vanishing
// inversion denominator (equal SNR at t and s) is a hard error.
template <typename T>
TensorT<T> progressive_target(const TeacherFn<T>& teacher, const TensorT<T>& z_t, double t, double s,
                              const TimestepGrid& grid, const NoiseSchedule& sched);

// One halving round: the student warm-starts from the teacher guide and is
// trained so its single guided pass matches progressive_target, with t drawn
// from the student-grid points (even teacher-grid indices). Base frozen.
ParamSet progressive_distill_round(const DenoiserSpec& spec, const ParamSet& base,
                                   const GuideSpec& gspec, const ParamSet& guide_teacher,
                                   const DistillRound& round, const Dataset& data,
                                   const NoiseSchedule& sched, const TrainConfig& cfg,
                                   MetricsLog* log = nullptr);

}  // namespace pgdd
