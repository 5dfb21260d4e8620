#include "pgdd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pgdd/rng.hpp"
#include "pgdd/util.hpp"

namespace pgdd {

namespace {

// MACs of one conditioned dense block: in->w, cond E->w, w->out.
double dense_block_macs(int64_t in, int64_t w, int64_t out, int64_t e) {
  return static_cast<double>(in * w + e * w + w * out);
}

// MACs of one conditioned conv block at out_hw^2 positions.
double conv_block_macs(int64_t ci, int64_t co, int64_t out_hw, int64_t e) {
  return static_cast<double>(co * ci * 9 * out_hw * out_hw + e * co);
}

double base_pass_macs(const DenoiserSpec& s) {
  const int64_t e = s.embed_dim;
  const int L = static_cast<int>(s.widths.size());
  double macs = static_cast<double>(2 * e * e);  // time MLP
  if (s.mode == Backbone::point2d) {
    int64_t prev = 2;
    for (int l = 1; l <= L; ++l) {
      int64_t w = s.widths[static_cast<size_t>(l - 1)];
      macs += dense_block_macs(prev, w, w, e);
      prev = w;
    }
    int64_t wl = s.widths[static_cast<size_t>(L - 1)];
    macs += dense_block_macs(wl, wl, wl, e);
    for (int l = L; l >= 2; --l)
      macs += dense_block_macs(s.widths[static_cast<size_t>(l - 1)], s.widths[static_cast<size_t>(l - 1)],
                               s.widths[static_cast<size_t>(l - 2)], e);
    macs += static_cast<double>(s.widths[0] * 2);
  } else {
    auto hw = [](int level) { return kImageSize >> (level - 1); };
    int64_t prev = 1;
    for (int l = 1; l <= L; ++l) {
      int64_t w = s.widths[static_cast<size_t>(l - 1)];
      macs += conv_block_macs(prev, w, hw(l), e);
      prev = w;
    }
    int64_t wl = s.widths[static_cast<size_t>(L - 1)];
    macs += conv_block_macs(wl, wl, hw(L), e);
    for (int l = L; l >= 2; --l)
      macs += conv_block_macs(s.widths[static_cast<size_t>(l - 1)], s.widths[static_cast<size_t>(l - 2)],
                              hw(l - 1), e);
    macs += static_cast<double>(s.widths[0] * 9 * kImageSize * kImageSize);
  }
  return macs;
}

double guide_pass_macs(const GuideSpec& g) {
  const DenoiserSpec& s = g.base;
  const int L = static_cast<int>(s.widths.size());
  if (g.variant == GuideVariant::tiny) {
    const int64_t id = g.inner_dim;
    double macs = static_cast<double>(3 * id * id);  // time, class, mix projections
    for (int w : s.widths) macs += static_cast<double>(id * w);
    return macs;
  }
  const int64_t e = s.embed_dim;
  double macs = static_cast<double>(2 * e * e);
  if (s.mode == Backbone::point2d) {
    macs += static_cast<double>(2 * s.widths[0]);  // hint
    int64_t prev = 2;
    for (int l = 1; l <= L; ++l) {
      int64_t w = s.widths[static_cast<size_t>(l - 1)];
      macs += dense_block_macs(prev, w, w, e);
      prev = w;
    }
    int64_t wl = s.widths[static_cast<size_t>(L - 1)];
    macs += dense_block_macs(wl, wl, wl, e);
    for (int w : s.widths) macs += static_cast<double>(w) * w;  // port projections
  } else {
    auto hw = [](int level) { return kImageSize >> (level - 1); };
    macs += static_cast<double>(s.widths[0] * 9 * kImageSize * kImageSize);  // hint conv
    int64_t prev = 1;
    for (int l = 1; l <= L; ++l) {
      int64_t w = s.widths[static_cast<size_t>(l - 1)];
      macs += conv_block_macs(prev, w, hw(l), e);
      prev = w;
    }
    int64_t wl = s.widths[static_cast<size_t>(L - 1)];
    macs += conv_block_macs(wl, wl, hw(L), e);
    for (int l = 1; l <= L; ++l) {
      int64_t w = s.widths[static_cast<size_t>(l - 1)];
      macs += static_cast<double>(w) * w * hw(l) * hw(l);  // 1x1 port projections
    }
  }
  return macs;
}

}  // namespace

CostReport count_cost(const DenoiserSpec& base, const GuideSpec& guide) {
  base.validate();
  guide.validate();
  if (!(guide.base == base))
    throw std::invalid_argument("count_cost: guide spec targets a different base architecture");
  CostReport r;
  r.base_pass_flops = 2.0 * base_pass_macs(base);
  r.guide_pass_flops = 2.0 * guide_pass_macs(guide);
  r.base_params = init_denoiser(base, 0).param_count();
  r.guide_params = init_guide(guide, 0).param_count();
  return r;
}

double flop_ratio(const CostTotals& t) {
  if (t.two_pass_flops <= 0.0) throw std::invalid_argument("two_pass_flops must be positive");
  return (t.single_pass_flops + t.guide_pass_flops) / t.two_pass_flops;
}

double param_ratio(const CostTotals& t) {
  if (t.base_params <= 0.0) throw std::invalid_argument("base_params must be positive");
  return t.guide_params / t.base_params;
}

std::vector<double> InjectionHeatmap::time_mean() const {
  std::vector<double> out(num_ports(), 0.0);
  if (raw.empty()) return out;
  for (const auto& row : raw)
    for (size_t p = 0; p < out.size(); ++p) out[p] += row[p];
  for (auto& v : out) v /= static_cast<double>(raw.size());
  return out;
}

std::vector<double> InjectionHeatmap::quartile_mean(bool first) const {
  std::vector<double> out(num_ports(), 0.0);
  if (raw.empty()) return out;
  size_t q = std::max<size_t>(1, raw.size() / 4);
  size_t lo_i = first ? 0 : raw.size() - q;
  for (size_t i = lo_i; i < lo_i + q; ++i)
    for (size_t p = 0; p < out.size(); ++p) out[p] += raw[i][p];
  for (auto& v : out) v /= static_cast<double>(q);
  return out;
}

InjectionHeatmap injection_stats(const SampleTrace& trace, double g, HeatmapNorm) {
  if (trace.port_l1.empty() || trace.port_l1.size() != trace.steps())
    throw std::invalid_argument("trace has no recorded injection magnitudes");
  InjectionHeatmap h;
  h.g = g;
  h.grid.assign(trace.grid.begin(), trace.grid.end() - 1);
  h.raw = trace.port_l1;
  size_t ports = h.raw[0].size();
  for (const auto& row : h.raw)
    if (row.size() != ports) throw std::invalid_argument("ragged injection record in trace");
  if (ports == 0) throw std::invalid_argument("trace has no recorded injection magnitudes");
  h.lo = h.raw[0][0];
  h.hi = h.raw[0][0];
  for (const auto& row : h.raw)
    for (double v : row) {
      h.lo = std::min(h.lo, v);
      h.hi = std::max(h.hi, v);
    }
  double span = h.hi - h.lo;
  h.norm = h.raw;
  for (auto& row : h.norm)
    for (double& v : row) v = span > 0.0 ? (v - h.lo) / span : 0.0;
  return h;
}

namespace {

// W1 between two sorted empirical distributions via merged quantile sweep;
// handles unequal sample counts.
double w1_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  size_t i = 0, j = 0;
  double q = 0.0, w = 0.0;
  while (i < a.size() && j < b.size()) {
    double qa = static_cast<double>(i + 1) / na;
    double qb = static_cast<double>(j + 1) / nb;
    double qn = std::min(qa, qb);
    w += (qn - q) * std::fabs(a[i] - b[j]);
    if (qa <= qn) ++i;
    if (qb <= qn) ++j;
    q = qn;
  }
  return w;
}

}  // namespace

double sliced_wasserstein(const TensorF& a, const TensorF& b, int num_projections, uint64_t seed) {
  if (a.dims.empty() || b.dims.empty() || a.dims[0] < 1 || b.dims[0] < 1)
    throw std::invalid_argument("sliced_wasserstein needs non-empty sample sets");
  if (num_projections < 1) throw std::invalid_argument("need at least one projection");
  const int64_t na = a.dims[0], nb = b.dims[0];
  const int64_t d = a.numel() / na;
  if (d != b.numel() / nb)
    throw std::invalid_argument("sliced_wasserstein: sample dimensionality differs");
  RandomStream rs(seed, "analysis");
  std::vector<double> dir(static_cast<size_t>(d));
  std::vector<double> pa(static_cast<size_t>(na)), pb(static_cast<size_t>(nb));
  double total = 0.0;
  for (int p = 0; p < num_projections; ++p) {
    double n2 = 0.0;
    for (auto& v : dir) {
      v = rs.normal();
      n2 += v * v;
    }
    double scale = n2 > 1e-24 ? 1.0 / std::sqrt(n2) : 0.0;
    if (scale == 0.0) {
      dir[0] = 1.0;
      scale = 1.0;
    }
    for (int64_t i = 0; i < na; ++i) {
      double s = 0.0;
      for (int64_t k = 0; k < d; ++k) s += dir[static_cast<size_t>(k)] * a.ptr()[i * d + k];
      pa[static_cast<size_t>(i)] = s * scale;
    }
    for (int64_t i = 0; i < nb; ++i) {
      double s = 0.0;
      for (int64_t k = 0; k < d; ++k) s += dir[static_cast<size_t>(k)] * b.ptr()[i * d + k];
      pb[static_cast<size_t>(i)] = s * scale;
    }
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    total += w1_sorted(pa, pb);
  }
  return total / num_projections;
}

ProbeClassifier train_probe(const Dataset& data) {
  data.validate();
  const int64_t n = data.size();
  const int64_t d = data.x.numel() / n;
  const int k = data.num_classes;
  ProbeClassifier probe;
  probe.means = TensorF({k, d});
  std::vector<std::vector<double>> acc(static_cast<size_t>(k),
                                       std::vector<double>(static_cast<size_t>(d), 0.0));
  std::vector<int64_t> cnt(static_cast<size_t>(k), 0);
  for (int64_t i = 0; i < n; ++i) {
    int c = data.labels[static_cast<size_t>(i)];
    ++cnt[static_cast<size_t>(c)];
    for (int64_t e = 0; e < d; ++e)
      acc[static_cast<size_t>(c)][static_cast<size_t>(e)] += data.x.ptr()[i * d + e];
  }
  for (int c = 0; c < k; ++c) {
    if (cnt[static_cast<size_t>(c)] == 0)
      throw std::invalid_argument("probe training saw no samples of class " + std::to_string(c));
    for (int64_t e = 0; e < d; ++e)
      probe.means(c, e) = static_cast<float>(acc[static_cast<size_t>(c)][static_cast<size_t>(e)] /
                                             static_cast<double>(cnt[static_cast<size_t>(c)]));
  }
  return probe;
}

int probe_predict(const ProbeClassifier& probe, const float* x, int64_t d) {
  if (probe.num_classes() == 0) throw std::logic_error("probe is untrained");
  if (d != probe.means.dims[1]) throw std::invalid_argument("probe dimensionality mismatch");
  int best = 0;
  double best_d2 = 0.0;
  for (int c = 0; c < probe.num_classes(); ++c) {
    double d2 = 0.0;
    for (int64_t e = 0; e < d; ++e) {
      double r = static_cast<double>(x[e]) - static_cast<double>(probe.means(c, e));
      d2 += r * r;
    }
    if (c == 0 || d2 < best_d2) {
      best = c;
      best_d2 = d2;
    }
  }
  return best;
}

double class_alignment(const ProbeClassifier& probe, const TensorF& samples,
                       const std::vector<int>& labels) {
  if (probe.num_classes() == 0) throw std::logic_error("probe is untrained");
  if (samples.dims.empty() || samples.dims[0] < 1)
    throw std::invalid_argument("class_alignment needs samples");
  const int64_t n = samples.dims[0];
  const int64_t d = samples.numel() / n;
  if (static_cast<int64_t>(labels.size()) != n)
    throw std::invalid_argument("class_alignment needs one label per sample");
  int64_t hit = 0;
  for (int64_t i = 0; i < n; ++i)
    if (probe_predict(probe, samples.ptr() + i * d, d) == labels[static_cast<size_t>(i)]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(n);
}

void write_heatmap_csv(const InjectionHeatmap& h, const std::string& path) {
  std::string out = "step,t,port,raw,normalized\n";
  for (size_t i = 0; i < h.raw.size(); ++i)
    for (size_t p = 0; p < h.raw[i].size(); ++p)
      out += std::to_string(i) + "," + fmt_g17(h.grid[i]) + "," + std::to_string(p) + "," +
             fmt_g17(h.raw[i][p]) + "," + fmt_g17(h.norm[i][p]) + "\n";
  atomic_write_file(path, out);
}

void write_heatmap_svg(const InjectionHeatmap& h, const std::string& path) {
  const int cell = 12, mx = 40, my = 30;
  const int steps = static_cast<int>(h.raw.size());
  const int ports = static_cast<int>(h.num_ports());
  const int wpx = mx + steps * cell + 10, hpx = my + ports * cell + 10;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(wpx) +
                  "\" height=\"" + std::to_string(hpx) + "\">\n";
  s += "<text x=\"4\" y=\"16\" font-size=\"12\">injection magnitude, g=" + fmt_g17(h.g) +
       " (columns: steps, rows: ports)</text>\n";
  for (int i = 0; i < steps; ++i) {
    for (int p = 0; p < ports; ++p) {
      int v = static_cast<int>(h.norm[static_cast<size_t>(i)][static_cast<size_t>(p)] * 255.0 + 0.5);
      int shade = 255 - v;  // dark = strong
      s += "<rect x=\"" + std::to_string(mx + i * cell) + "\" y=\"" + std::to_string(my + p * cell) +
           "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(cell) +
           "\" fill=\"rgb(" + std::to_string(shade) + "," + std::to_string(shade) + "," +
           std::to_string(shade) + ")\"/>\n";
    }
  }
  s += "</svg>\n";
  atomic_write_file(path, s);
}

void write_cost_csv(const CostReport& r, const std::string& path) {
  std::string out = "metric,value\n";
  out += "base_pass_flops," + fmt_g17(r.base_pass_flops) + "\n";
  out += "guide_pass_flops," + fmt_g17(r.guide_pass_flops) + "\n";
  out += "base_params," + std::to_string(r.base_params) + "\n";
  out += "guide_params," + std::to_string(r.guide_params) + "\n";
  out += "student_step_flops," + fmt_g17(r.student_step_flops()) + "\n";
  out += "cfg_step_flops," + fmt_g17(r.cfg_step_flops()) + "\n";
  out += "flop_ratio," + fmt_g17(r.flop_ratio()) + "\n";
  out += "param_ratio," + fmt_g17(r.param_ratio()) + "\n";
  atomic_write_file(path, out);
}

void write_curve_svg(const std::vector<double>& xs, const std::vector<double>& ys,
                     const std::string& title, const std::string& path) {
  if (xs.size() != ys.size()) throw std::invalid_argument("curve x/y length mismatch");
  const int w = 640, h = 320, m = 40;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
                  "\" height=\"" + std::to_string(h) + "\">\n";
  s += "<text x=\"4\" y=\"16\" font-size=\"12\">" + title + "</text>\n";
  if (!xs.empty()) {
    double x0 = xs[0], x1 = xs[0], y0 = ys[0], y1 = ys[0];
    for (size_t i = 0; i < xs.size(); ++i) {
      x0 = std::min(x0, xs[i]);
      x1 = std::max(x1, xs[i]);
      y0 = std::min(y0, ys[i]);
      y1 = std::max(y1, ys[i]);
    }
    double dx = x1 - x0 > 0 ? x1 - x0 : 1.0;
    double dy = y1 - y0 > 0 ? y1 - y0 : 1.0;
    s += "<polyline fill=\"none\" stroke=\"black\" points=\"";
    for (size_t i = 0; i < xs.size(); ++i) {
      double px = m + (xs[i] - x0) / dx * (w - 2 * m);
      double py = h - m - (ys[i] - y0) / dy * (h - 2 * m);
      s += fmt_g17(px) + "," + fmt_g17(py) + " ";
    }
    s += "\"/>\n";
  }
  s += "</svg>\n";
  atomic_write_file(path, s);
}

}  // namespace pgdd
