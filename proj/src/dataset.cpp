#include "pgdd/dataset.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "pgdd/checkpoint.hpp"
#include "pgdd/rng.hpp"

namespace pgdd {

void Dataset::validate() const {
  if (num_classes < 1) throw std::invalid_argument("dataset needs at least one class");
  if (x.dims.size() != 2 && x.dims.size() != 4)
    throw std::invalid_argument("dataset x must be [N,D] or [N,C,H,W]");
  if (static_cast<int64_t>(labels.size()) != size())
    throw std::invalid_argument("dataset needs one label per sample");
  for (int c : labels)
    if (c < 0 || c >= num_classes) throw std::invalid_argument("dataset label out of range");
}

Dataset sample_mixture(const MixtureSpec& mix, int64_t n, uint64_t seed) {
  mix.validate();
  if (n < 1) throw std::invalid_argument("sample_mixture needs n >= 1");
  const int K = mix.num_classes();
  const int D = mix.dim();
  Dataset ds;
  ds.num_classes = K;
  ds.x = TensorF({n, D});
  ds.labels.resize(static_cast<size_t>(n));
  RandomStream rs(seed, "data");
  for (int64_t i = 0; i < n; ++i) {
    int k = static_cast<int>(i % K);
    ds.labels[static_cast<size_t>(i)] = k;
    const auto& comps = mix.classes[static_cast<size_t>(k)];
    // Always consume a component draw so the stream layout does not depend
    // on per-class component counts.
    double u = rs.next_double();
    size_t j = 0;
    double acc = 0.0;
    for (; j + 1 < comps.size(); ++j) {
      acc += comps[j].weight;
      if (u < acc) break;
    }
    const MixtureComponent& comp = comps[j];
    for (int d = 0; d < D; ++d)
      ds.x(i, d) = static_cast<float>(comp.mean[static_cast<size_t>(d)] +
                                      std::sqrt(comp.var[static_cast<size_t>(d)]) * rs.normal());
  }
  return ds;
}

namespace {

// Primitive kind cycles with class id; radius grows every full cycle so more
// than four classes stay distinguishable.
void render_primitive(int cls, int cx, int cy, float fg, TensorF& x, int64_t i) {
  int kind = cls % 4;
  int rad = 4 + cls / 4;
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      int dx = r - cx, dy = c - cy;
      int cheb = std::max(std::abs(dx), std::abs(dy));
      bool on = false;
      switch (kind) {
        case 0: on = dx * dx + dy * dy <= rad * rad; break;
        case 1: on = cheb <= rad && cheb >= rad - 1; break;
        case 2: on = (std::abs(dx) <= 1 || std::abs(dy) <= 1) && cheb <= rad + 1; break;
        default: on = cheb <= rad && (((dx + dy) % 4 + 4) % 4 < 2); break;
      }
      if (on) x(i, 0, r, c) = fg;
    }
  }
}

}  // namespace

Dataset make_shapes16(int num_classes, int64_t n, uint64_t seed) {
  if (num_classes < 1 || num_classes > 8)
    throw std::invalid_argument("shapes16 supports 1..8 classes");
  if (n < 1) throw std::invalid_argument("make_shapes16 needs n >= 1");
  Dataset ds;
  ds.num_classes = num_classes;
  ds.x = TensorF({n, 1, kImageSize, kImageSize});
  ds.labels.resize(static_cast<size_t>(n));
  RandomStream rs(seed, "data");
  for (int64_t i = 0; i < n; ++i) {
    int k = static_cast<int>(i % num_classes);
    ds.labels[static_cast<size_t>(i)] = k;
    int cx = 8 + static_cast<int>(rs.uniform_index(5)) - 2;
    int cy = 8 + static_cast<int>(rs.uniform_index(5)) - 2;
    float amp = static_cast<float>(rs.uniform(0.5, 1.0));
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c) ds.x(i, 0, r, c) = -0.5f;
    render_primitive(k, cx, cy, amp, ds.x, i);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c)
        ds.x(i, 0, r, c) += static_cast<float>(0.05 * rs.normal());
  }
  return ds;
}

MixtureSpec rotate_mixture(const MixtureSpec& mix, double degrees) {
  mix.validate();
  if (mix.dim() != 2) throw std::invalid_argument("rotate_mixture needs a 2-d mixture");
  double a = degrees * M_PI / 180.0;
  double ca = std::cos(a), sa = std::sin(a);
  MixtureSpec out = mix;
  for (auto& cls : out.classes) {
    for (auto& comp : cls) {
      if (std::fabs(comp.var[0] - comp.var[1]) > 1e-12)
        throw std::invalid_argument("rotate_mixture needs isotropic component variances");
      double mx = comp.mean[0], my = comp.mean[1];
      comp.mean[0] = ca * mx - sa * my;
      comp.mean[1] = sa * mx + ca * my;
    }
  }
  return out;
}

MixtureSpec scale_mixture(const MixtureSpec& mix, double factor) {
  mix.validate();
  if (factor <= 0.0) throw std::invalid_argument("scale_mixture needs a positive factor");
  MixtureSpec out = mix;
  for (auto& cls : out.classes)
    for (auto& comp : cls)
      for (auto& m : comp.mean) m *= factor;
  return out;
}

Dataset invert_polarity(const Dataset& d) {
  d.validate();
  Dataset out = d;
  for (auto& v : out.x.data) v = -v;
  return out;
}

void save_dataset(const Dataset& d, const std::string& path, const std::string& extra_meta_json) {
  d.validate();
  nlohmann::json meta;
  if (!extra_meta_json.empty()) meta = nlohmann::json::parse(extra_meta_json);
  meta["kind"] = "dataset";
  meta["num_classes"] = d.num_classes;
  CheckpointBundle b;
  b.metadata_json = meta.dump();
  b.tensors.push_back({"x", d.x});
  TensorF lab({static_cast<int64_t>(d.labels.size())});
  for (size_t i = 0; i < d.labels.size(); ++i) lab.data[i] = static_cast<float>(d.labels[i]);
  b.tensors.push_back({"labels", std::move(lab)});
  save_checkpoint(b, path);
}

Dataset load_dataset(const std::string& path) {
  CheckpointBundle b = load_checkpoint(path);
  auto meta = nlohmann::json::parse(b.metadata_json);
  if (!meta.contains("kind") || meta["kind"] != "dataset")
    throw std::runtime_error(path + " is not a dataset bundle");
  Dataset d;
  d.num_classes = meta["num_classes"].get<int>();
  d.x = b.tensor("x");
  const TensorF& lab = b.tensor("labels");
  d.labels.resize(lab.data.size());
  for (size_t i = 0; i < lab.data.size(); ++i)
    d.labels[i] = static_cast<int>(std::lround(lab.data[i]));
  d.validate();
  return d;
}

}  // namespace pgdd
