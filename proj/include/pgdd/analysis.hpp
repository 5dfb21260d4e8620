#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgdd/dataset.hpp"
#include "pgdd/guide.hpp"
#include "pgdd/network.hpp"
#include "pgdd/sampler.hpp"
#include "pgdd/tensor.hpp"

namespace pgdd {

// Analytic cost accounting from layer shapes. FLOPs = 2 * multiply-
// accumulates; table lookups, biases, and activations are not counted, so
// the numbers are stable across machines.
struct CostReport {
  double base_pass_flops = 0.0;
  double guide_pass_flops = 0.0;
  int64_t base_params = 0;
  int64_t guide_params = 0;

  double student_step_flops() const { return base_pass_flops + guide_pass_flops; }
  double cfg_step_flops() const { return 2.0 * base_pass_flops; }
  double flop_ratio() const { return student_step_flops() / cfg_step_flops(); }
  double param_ratio() const {
    return static_cast<double>(guide_params) / static_cast<double>(base_params);
  }
};

CostReport count_cost(const DenoiserSpec& base, const GuideSpec& guide);

// Same ratio arithmetic applied to externally supplied totals (any units;
// they cancel). Used to sanity-check the counter against published numbers.
struct CostTotals {
  double single_pass_flops = 0.0;
  double guide_pass_flops = 0.0;
  double two_pass_flops = 0.0;
  double base_params = 0.0;
  double guide_params = 0.0;
};

double flop_ratio(const CostTotals& t);
double param_ratio(const CostTotals& t);

enum class HeatmapNorm { global_minmax };

// Per-port, per-step injection magnitudes lifted from a recorded trace,
// min-max normalized over the whole map (an all-equal map normalizes to 0).
struct InjectionHeatmap {
  double g = 0.0;
  std::vector<double> grid;               // t at the start of each step
  std::vector<std::vector<double>> raw;   // [step][port] mean |injection|
  std::vector<std::vector<double>> norm;  // raw, rescaled into [0,1]
  double lo = 0.0;
  double hi = 0.0;

  size_t num_ports() const { return raw.empty() ? 0 : raw[0].size(); }
  // Average over steps, one value per port.
  std::vector<double> time_mean() const;
  // Mean over the first/last quarter of steps, one value per port.
  std::vector<double> quartile_mean(bool first) const;
};

InjectionHeatmap injection_stats(const SampleTrace& trace, double g,
                                 HeatmapNorm norm = HeatmapNorm::global_minmax);

// Mean 1-D Wasserstein-1 over random unit projections; a and b are [N, D]
// with equal D (sample counts may differ).
double sliced_wasserstein(const TensorF& a, const TensorF& b, int num_projections, uint64_t seed);

// Nearest-class-mean probe fitted on real labeled data.
struct ProbeClassifier {
  TensorF means;  // [K, D]

  int num_classes() const { return means.dims.empty() ? 0 : static_cast<int>(means.dims[0]); }
};

ProbeClassifier train_probe(const Dataset& data);
int probe_predict(const ProbeClassifier& probe, const float* x, int64_t d);

// Fraction of samples whose nearest class mean matches their conditioning
// label. samples is [N, ...] flattened per row.
double class_alignment(const ProbeClassifier& probe, const TensorF& samples,
                       const std::vector<int>& labels);

// Report emission. All writers are byte-deterministic in their inputs.
void write_heatmap_csv(const InjectionHeatmap& h, const std::string& path);
void write_heatmap_svg(const InjectionHeatmap& h, const std::string& path);
void write_cost_csv(const CostReport& r, const std::string& path);
void write_curve_svg(const std::vector<double>& xs, const std::vector<double>& ys,
                     const std::string& title, const std::string& path);

}  // namespace pgdd
