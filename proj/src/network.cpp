#include "pgdd/network.hpp"

#include <cmath>
#include <stdexcept>

#include "blocks.hpp"
#include "cond.hpp"
#include "layers.hpp"
#include "pgdd/rng.hpp"
#include "pgdd/util.hpp"

namespace pgdd {

// ===== ParamSet =====

template <typename T>
TensorT<T>& ParamSetT<T>::add(const std::string& name, Shape shape) {
  if (index.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  index[name] = items.size();
  items.push_back(ParamTensorT<T>{name, TensorT<T>(std::move(shape)), {}});
  return items.back().value;
}

template <typename T>
TensorT<T>& ParamSetT<T>::value(const std::string& name) {
  auto it = index.find(name);
  if (it == index.end()) throw std::invalid_argument("unknown parameter: " + name);
  return items[it->second].value;
}

template <typename T>
const TensorT<T>& ParamSetT<T>::value(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end()) throw std::invalid_argument("unknown parameter: " + name);
  return items[it->second].value;
}

template <typename T>
TensorT<T>& ParamSetT<T>::grad(const std::string& name) {
  auto it = index.find(name);
  if (it == index.end()) throw std::invalid_argument("unknown parameter: " + name);
  ParamTensorT<T>& p = items[it->second];
  if (p.grad.empty() && p.value.numel() > 0)
    throw std::logic_error("gradients not allocated for " + name);
  return p.grad;
}

template <typename T>
void ParamSetT<T>::alloc_grads() {
  for (auto& p : items)
    if (p.grad.empty()) p.grad = TensorT<T>(p.value.dims);
}

template <typename T>
void ParamSetT<T>::zero_grads() {
  for (auto& p : items)
    if (!p.grad.empty()) p.grad.fill(T(0));
}

template <typename T>
bool ParamSetT<T>::grads_allocated() const {
  for (const auto& p : items)
    if (p.grad.empty() && p.value.numel() > 0) return false;
  return !items.empty();
}

template <typename T>
int64_t ParamSetT<T>::param_count() const {
  int64_t n = 0;
  for (const auto& p : items) n += p.value.numel();
  return n;
}

template <typename T>
uint64_t ParamSetT<T>::value_checksum() const {
  uint64_t h = fnv1a64(owner.data(), owner.size());
  for (const auto& p : items) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.value.data.data(), p.value.data.size() * sizeof(T), h);
  }
  return h;
}

template struct ParamSetT<float>;
template struct ParamSetT<double>;

// ===== spec =====

void DenoiserSpec::validate() const {
  if (widths.empty()) throw std::invalid_argument("denoiser spec needs at least one level width");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("denoiser widths must be positive");
  if (num_classes < 1) throw std::invalid_argument("denoiser needs num_classes >= 1");
  if (embed_dim < 2 || embed_dim % 2 != 0)
    throw std::invalid_argument("embed_dim must be even and >= 2");
  if (num_ports != static_cast<int>(widths.size()))
    throw std::invalid_argument("num_ports must equal the number of levels");
}

Shape DenoiserSpec::data_shape(int64_t batch) const {
  if (mode == Backbone::point2d) return {batch, 2};
  return {batch, 1, kImageSize, kImageSize};
}

DenoiserSpec default_point2d_spec() {
  DenoiserSpec s;
  s.mode = Backbone::point2d;
  s.widths = {128, 128, 128};
  s.num_classes = 2;
  s.embed_dim = 64;
  s.num_ports = 3;
  return s;
}

DenoiserSpec default_image16_spec() {
  DenoiserSpec s;
  s.mode = Backbone::image16;
  s.widths = {32, 64, 128};
  s.num_classes = 3;
  s.embed_dim = 128;
  s.num_ports = 3;
  return s;
}

std::vector<Shape> port_shapes(const DenoiserSpec& spec, int64_t batch) {
  spec.validate();
  std::vector<Shape> out;
  for (size_t l = 0; l < spec.widths.size(); ++l) {
    if (spec.mode == Backbone::point2d) {
      out.push_back({batch, spec.widths[l]});
    } else {
      int64_t hw = kImageSize >> l;  // halved per level past the first
      out.push_back({batch, spec.widths[l], hw, hw});
    }
  }
  return out;
}

int condition_row(const DenoiserSpec& spec, int c) { return cond::resolve_row(spec.num_classes, c); }

// ===== init =====

namespace {

void draw_tensor(TensorF& t, RandomStream& rs, double scale) {
  for (auto& v : t.data) v = static_cast<float>(rs.normal() * scale);
}

}  // namespace

ParamSet init_denoiser(const DenoiserSpec& spec, uint64_t seed) {
  spec.validate();
  ParamSet ps;
  ps.owner = "base";
  RandomStream rs(seed, "init");
  const int64_t E = spec.embed_dim;
  const int64_t K = spec.num_classes;
  const int L = static_cast<int>(spec.widths.size());

  auto dense_init = [&](const std::string& prefix, int64_t in, int64_t out) {
    draw_tensor(ps.add(prefix + ".w", {in, out}), rs, 1.0 / std::sqrt(static_cast<double>(in)));
    ps.add(prefix + ".b", {out});
  };

  dense_init("time.fc1", E, E);
  dense_init("time.fc2", E, E);
  draw_tensor(ps.add("cls.table", {K + 1, E}), rs, 0.02);

  if (spec.mode == Backbone::point2d) {
    auto block_init = [&](const std::string& name, int64_t in, int64_t w, int64_t out) {
      dense_init(name + ".a", in, w);
      dense_init(name + ".c", E, w);
      dense_init(name + ".b", w, out);
    };
    int64_t prev = 2;
    for (int l = 1; l <= L; ++l) {
      block_init("enc" + std::to_string(l), prev, spec.widths[l - 1], spec.widths[l - 1]);
      prev = spec.widths[l - 1];
    }
    block_init("mid", spec.widths[L - 1], spec.widths[L - 1], spec.widths[L - 1]);
    for (int l = L; l >= 2; --l)
      block_init("dec" + std::to_string(l), spec.widths[l - 1], spec.widths[l - 1], spec.widths[l - 2]);
    dense_init("out", spec.widths[0], 2);
  } else {
    auto conv_init = [&](const std::string& name, int64_t ci, int64_t co) {
      draw_tensor(ps.add(name + ".conv.w", {co, ci * 9}), rs, 1.0 / std::sqrt(static_cast<double>(ci * 9)));
      ps.add(name + ".conv.b", {co});
      dense_init(name + ".cond", E, co);
    };
    int64_t prev = 1;
    for (int l = 1; l <= L; ++l) {
      conv_init("enc" + std::to_string(l), prev, spec.widths[l - 1]);
      prev = spec.widths[l - 1];
    }
    conv_init("mid", spec.widths[L - 1], spec.widths[L - 1]);
    for (int l = L; l >= 2; --l)
      conv_init("dec" + std::to_string(l), spec.widths[l - 1], spec.widths[l - 2]);
    draw_tensor(ps.add("out.w", {1, spec.widths[0] * 9}), rs,
                1.0 / std::sqrt(static_cast<double>(spec.widths[0] * 9)));
    ps.add("out.b", {1});
  }
  return ps;
}

// ===== cache =====

template <typename T>
struct DenoiserCache<T>::Impl {
  int64_t batch = 0;
  cond::CondPath<T> cp;
  std::vector<blocks::DenseBlockCache<T>> dblocks;  // enc1..L, mid, decL..dec2
  std::vector<blocks::ConvBlockCache<T>> cblocks;
  TensorT<T> merged1;
  TensorT<T> out_col;
};

template <typename T>
DenoiserCache<T>::DenoiserCache() : impl_(new Impl()) {}
template <typename T>
DenoiserCache<T>::~DenoiserCache() = default;
template <typename T>
DenoiserCache<T>::DenoiserCache(DenoiserCache&&) noexcept = default;
template <typename T>
DenoiserCache<T>& DenoiserCache<T>::operator=(DenoiserCache&&) noexcept = default;

template class DenoiserCache<float>;
template class DenoiserCache<double>;

// ===== forward =====

namespace {

template <typename T>
void check_injections(const DenoiserSpec& spec, const InjectionSetT<T>& inj, int64_t batch) {
  if (inj.empty()) return;
  auto shapes = port_shapes(spec, batch);
  if (inj.size() != shapes.size())
    throw std::invalid_argument("injection set has " + std::to_string(inj.size()) + " ports, expected " +
                                std::to_string(shapes.size()));
  std::string bad;
  for (size_t p = 0; p < shapes.size(); ++p)
    if (inj.ports[p].dims != shapes[p])
      bad += (bad.empty() ? "" : ", ") + std::string("port ") + std::to_string(p) + " " +
             shape_str(inj.ports[p].dims) + " != " + shape_str(shapes[p]);
  if (!bad.empty()) throw std::invalid_argument("injection shape mismatch: " + bad);
}

template <typename T>
blocks::DenseBlockRefs<T> dense_refs(const ParamSetT<T>& p, const std::string& n) {
  return {&p.value(n + ".a.w"), &p.value(n + ".a.b"), &p.value(n + ".c.w"),
          &p.value(n + ".c.b"), &p.value(n + ".b.w"), &p.value(n + ".b.b")};
}

template <typename T>
blocks::DenseBlockGrads<T> dense_grads(ParamSetT<T>& p, const std::string& n, bool acc) {
  if (!acc) return {nullptr, nullptr, nullptr, nullptr, nullptr, nullptr};
  return {&p.grad(n + ".a.w"), &p.grad(n + ".a.b"), &p.grad(n + ".c.w"),
          &p.grad(n + ".c.b"), &p.grad(n + ".b.w"), &p.grad(n + ".b.b")};
}

template <typename T>
blocks::ConvBlockRefs<T> conv_refs(const ParamSetT<T>& p, const std::string& n, int stride) {
  return {&p.value(n + ".conv.w"), &p.value(n + ".conv.b"), &p.value(n + ".cond.w"),
          &p.value(n + ".cond.b"), stride};
}

template <typename T>
blocks::ConvBlockGrads<T> conv_grads(ParamSetT<T>& p, const std::string& n, bool acc) {
  if (!acc) return {nullptr, nullptr, nullptr, nullptr};
  return {&p.grad(n + ".conv.w"), &p.grad(n + ".conv.b"), &p.grad(n + ".cond.w"), &p.grad(n + ".cond.b")};
}

}  // namespace

template <typename T>
TensorT<T> denoiser_forward(const DenoiserSpec& spec, const ParamSetT<T>& params, const TensorT<T>& z,
                            const std::vector<double>& t, const std::vector<int>& c,
                            const InjectionSetT<T>& injections, DenoiserCache<T>* cache) {
  spec.validate();
  if (z.dims != spec.data_shape(z.dims.empty() ? 0 : z.dims[0]))
    throw std::invalid_argument("denoiser input shape " + shape_str(z.dims) + " invalid for backbone");
  const int64_t B = z.dims[0];
  if (static_cast<int64_t>(t.size()) != B || static_cast<int64_t>(c.size()) != B)
    throw std::invalid_argument("denoiser needs one t and one condition per sample");
  check_injections(spec, injections, B);

  const int L = static_cast<int>(spec.widths.size());
  cond::CondPath<T> cp = cond::forward(params, spec.embed_dim, spec.num_classes, t, c);

  typename DenoiserCache<T>::Impl* ci = cache ? &cache->impl() : nullptr;
  if (ci) {
    ci->batch = B;
    ci->cp = cp;
    ci->dblocks.assign(spec.mode == Backbone::point2d ? 2 * static_cast<size_t>(L) : 0, {});
    ci->cblocks.assign(spec.mode == Backbone::image16 ? 2 * static_cast<size_t>(L) : 0, {});
  }

  auto inj_for = [&](int level) -> const TensorT<T>* {
    if (injections.empty()) return nullptr;
    return &injections.ports[static_cast<size_t>(level - 1)];
  };

  if (spec.mode == Backbone::point2d) {
    std::vector<TensorT<T>> enc;
    TensorT<T> h = z;
    for (int l = 1; l <= L; ++l) {
      h = blocks::dense_block(h, cp.cond, static_cast<const TensorT<T>*>(nullptr),
                              dense_refs(params, "enc" + std::to_string(l)),
                              ci ? &ci->dblocks[static_cast<size_t>(l - 1)] : nullptr);
      enc.push_back(h);
    }
    TensorT<T> u = blocks::dense_block(h, cp.cond, static_cast<const TensorT<T>*>(nullptr),
                                       dense_refs(params, "mid"),
                                       ci ? &ci->dblocks[static_cast<size_t>(L)] : nullptr);
    for (int l = L; l >= 1; --l) {
      TensorT<T> merged = u;
      kern::add_inplace(static_cast<size_t>(merged.numel()), enc[static_cast<size_t>(l - 1)].ptr(),
                        merged.ptr());
      if (const TensorT<T>* inj = inj_for(l))
        kern::add_inplace(static_cast<size_t>(merged.numel()), inj->ptr(), merged.ptr());
      if (l > 1) {
        u = blocks::dense_block(merged, cp.cond, static_cast<const TensorT<T>*>(nullptr),
                                dense_refs(params, "dec" + std::to_string(l)),
                                ci ? &ci->dblocks[static_cast<size_t>(2 * L - l + 1)] : nullptr);
      } else {
        if (ci) ci->merged1 = merged;
        return layers::dense(merged, params.value("out.w"), params.value("out.b"));
      }
    }
  } else {
    std::vector<TensorT<T>> enc;
    TensorT<T> h = z;
    for (int l = 1; l <= L; ++l) {
      h = blocks::conv_block(h, cp.cond, static_cast<const TensorT<T>*>(nullptr),
                             conv_refs(params, "enc" + std::to_string(l), l == 1 ? 1 : 2),
                             ci ? &ci->cblocks[static_cast<size_t>(l - 1)] : nullptr);
      enc.push_back(h);
    }
    TensorT<T> u = blocks::conv_block(h, cp.cond, static_cast<const TensorT<T>*>(nullptr),
                                      conv_refs(params, "mid", 1),
                                      ci ? &ci->cblocks[static_cast<size_t>(L)] : nullptr);
    for (int l = L; l >= 1; --l) {
      TensorT<T> merged = u;
      kern::add_inplace(static_cast<size_t>(merged.numel()), enc[static_cast<size_t>(l - 1)].ptr(),
                        merged.ptr());
      if (const TensorT<T>* inj = inj_for(l))
        kern::add_inplace(static_cast<size_t>(merged.numel()), inj->ptr(), merged.ptr());
      if (l > 1) {
        TensorT<T> up = layers::upsample2(merged);
        u = blocks::conv_block(up, cp.cond, static_cast<const TensorT<T>*>(nullptr),
                               conv_refs(params, "dec" + std::to_string(l), 1),
                               ci ? &ci->cblocks[static_cast<size_t>(2 * L - l + 1)] : nullptr);
      } else {
        if (ci) ci->merged1 = merged;
        TensorT<T>* colp = ci ? &ci->out_col : nullptr;
        return layers::conv3x3(merged, params.value("out.w"), params.value("out.b"), 1, colp);
      }
    }
  }
  throw std::logic_error("unreachable");
}

template <typename T>
void denoiser_backward(const DenoiserSpec& spec, ParamSetT<T>& params, const DenoiserCache<T>& cache,
                       const TensorT<T>& d_eps, bool accumulate_param_grads,
                       InjectionSetT<T>* d_injections) {
  const typename DenoiserCache<T>::Impl& ci = cache.impl();
  if (ci.batch == 0) throw std::logic_error("backward without a cached forward");
  if (accumulate_param_grads && !params.grads_allocated())
    throw std::logic_error("backward: grads not allocated");
  const int L = static_cast<int>(spec.widths.size());
  const bool acc = accumulate_param_grads;
  auto shapes = port_shapes(spec, ci.batch);

  if (d_injections) {
    d_injections->ports.clear();
    d_injections->ports.resize(shapes.size());
  }

  TensorT<T> dcond({ci.batch, spec.embed_dim});

  if (spec.mode == Backbone::point2d) {
    // d wrt the deepest reached merge; starts at merged_1 via the out layer.
    TensorT<T> dmerged(ci.merged1.dims);
    layers::dense_backward(ci.merged1, params.value("out.w"), d_eps, &dmerged, false,
                           acc ? &params.grad("out.w") : nullptr, acc ? &params.grad("out.b") : nullptr);
    std::vector<TensorT<T>> denc;
    for (int l = 1; l <= L; ++l) denc.emplace_back(shapes[static_cast<size_t>(l - 1)]);

    for (int l = 1; l <= L; ++l) {
      if (d_injections) d_injections->ports[static_cast<size_t>(l - 1)] = dmerged;
      kern::add_inplace(static_cast<size_t>(dmerged.numel()), dmerged.ptr(),
                        denc[static_cast<size_t>(l - 1)].ptr());
      if (l < L) {
        const auto& bc = ci.dblocks[static_cast<size_t>(2 * L - l)];
        TensorT<T> dnext(bc.x.dims);
        blocks::dense_block_backward(bc, ci.cp.cond, dmerged, dense_refs(params, "dec" + std::to_string(l + 1)),
                                     dense_grads(params, "dec" + std::to_string(l + 1), acc), &dnext, &dcond,
                                     static_cast<TensorT<T>*>(nullptr));
        dmerged = std::move(dnext);
      } else {
        const auto& bc = ci.dblocks[static_cast<size_t>(L)];
        blocks::dense_block_backward(bc, ci.cp.cond, dmerged, dense_refs(params, "mid"),
                                     dense_grads(params, "mid", acc), &denc[static_cast<size_t>(L - 1)],
                                     &dcond, static_cast<TensorT<T>*>(nullptr));
      }
    }
    for (int l = L; l >= 1; --l) {
      const auto& bc = ci.dblocks[static_cast<size_t>(l - 1)];
      TensorT<T>* dx = l > 1 ? &denc[static_cast<size_t>(l - 2)] : nullptr;
      blocks::dense_block_backward(bc, ci.cp.cond, denc[static_cast<size_t>(l - 1)],
                                   dense_refs(params, "enc" + std::to_string(l)),
                                   dense_grads(params, "enc" + std::to_string(l), acc), dx, &dcond,
                                   static_cast<TensorT<T>*>(nullptr));
    }
  } else {
    TensorT<T> dmerged(ci.merged1.dims);
    layers::conv3x3_backward(ci.merged1, params.value("out.w"), ci.out_col, d_eps, 1, &dmerged, false,
                             acc ? &params.grad("out.w") : nullptr, acc ? &params.grad("out.b") : nullptr);
    std::vector<TensorT<T>> denc;
    for (int l = 1; l <= L; ++l) denc.emplace_back(shapes[static_cast<size_t>(l - 1)]);

    for (int l = 1; l <= L; ++l) {
      if (d_injections) d_injections->ports[static_cast<size_t>(l - 1)] = dmerged;
      kern::add_inplace(static_cast<size_t>(dmerged.numel()), dmerged.ptr(),
                        denc[static_cast<size_t>(l - 1)].ptr());
      if (l < L) {
        const auto& bc = ci.cblocks[static_cast<size_t>(2 * L - l)];
        TensorT<T> dup(bc.x.dims);
        blocks::conv_block_backward(bc, ci.cp.cond, dmerged, conv_refs(params, "dec" + std::to_string(l + 1), 1),
                                    conv_grads(params, "dec" + std::to_string(l + 1), acc), &dup, false,
                                    &dcond, static_cast<TensorT<T>*>(nullptr));
        dmerged = layers::upsample2_backward(dup);
      } else {
        const auto& bc = ci.cblocks[static_cast<size_t>(L)];
        blocks::conv_block_backward(bc, ci.cp.cond, dmerged, conv_refs(params, "mid", 1),
                                    conv_grads(params, "mid", acc), &denc[static_cast<size_t>(L - 1)], true,
                                    &dcond, static_cast<TensorT<T>*>(nullptr));
      }
    }
    for (int l = L; l >= 1; --l) {
      const auto& bc = ci.cblocks[static_cast<size_t>(l - 1)];
      TensorT<T>* dx = l > 1 ? &denc[static_cast<size_t>(l - 2)] : nullptr;
      blocks::conv_block_backward(bc, ci.cp.cond, denc[static_cast<size_t>(l - 1)],
                                  conv_refs(params, "enc" + std::to_string(l), l == 1 ? 1 : 2),
                                  conv_grads(params, "enc" + std::to_string(l), acc), dx, true, &dcond,
                                  static_cast<TensorT<T>*>(nullptr));
    }
  }
  if (acc) cond::backward(params, ci.cp, dcond);
}

template <typename T>
TensorT<T> embed_time(const DenoiserSpec& spec, const ParamSetT<T>& params, const std::vector<double>& t) {
  TensorT<T> feats = layers::time_features<T>(t, spec.embed_dim);
  TensorT<T> h = layers::silu(layers::dense(feats, params.value("time.fc1.w"), params.value("time.fc1.b")));
  return layers::dense(h, params.value("time.fc2.w"), params.value("time.fc2.b"));
}

template <typename T>
TensorT<T> embed_condition(const DenoiserSpec& spec, const ParamSetT<T>& params, const std::vector<int>& c) {
  const TensorT<T>& table = params.value("cls.table");
  const int64_t E = spec.embed_dim;
  TensorT<T> out({static_cast<int64_t>(c.size()), E});
  for (size_t i = 0; i < c.size(); ++i) {
    int row = condition_row(spec, c[i]);
    for (int64_t j = 0; j < E; ++j) out(static_cast<int64_t>(i), j) = table(row, j);
  }
  return out;
}

template TensorT<float> denoiser_forward(const DenoiserSpec&, const ParamSetT<float>&, const TensorT<float>&,
                                         const std::vector<double>&, const std::vector<int>&,
                                         const InjectionSetT<float>&, DenoiserCache<float>*);
template TensorT<double> denoiser_forward(const DenoiserSpec&, const ParamSetT<double>&,
                                          const TensorT<double>&, const std::vector<double>&,
                                          const std::vector<int>&, const InjectionSetT<double>&,
                                          DenoiserCache<double>*);
template void denoiser_backward(const DenoiserSpec&, ParamSetT<float>&, const DenoiserCache<float>&,
                                const TensorT<float>&, bool, InjectionSetT<float>*);
template void denoiser_backward(const DenoiserSpec&, ParamSetT<double>&, const DenoiserCache<double>&,
                                const TensorT<double>&, bool, InjectionSetT<double>*);

template <typename T>
void denoiser_backward_frozen(const DenoiserSpec& spec, const ParamSetT<T>& params,
                              const DenoiserCache<T>& cache, const TensorT<T>& d_eps,
                              InjectionSetT<T>* d_injections) {
  // accumulate_param_grads=false never touches grad buffers, so the cast is
  // observationally const.
  denoiser_backward(spec, const_cast<ParamSetT<T>&>(params), cache, d_eps, false, d_injections);
}

template void denoiser_backward_frozen(const DenoiserSpec&, const ParamSetT<float>&,
                                       const DenoiserCache<float>&, const TensorT<float>&,
                                       InjectionSetT<float>*);
template void denoiser_backward_frozen(const DenoiserSpec&, const ParamSetT<double>&,
                                       const DenoiserCache<double>&, const TensorT<double>&,
                                       InjectionSetT<double>*);
template TensorT<float> embed_time(const DenoiserSpec&, const ParamSetT<float>&, const std::vector<double>&);
template TensorT<double> embed_time(const DenoiserSpec&, const ParamSetT<double>&,
                                    const std::vector<double>&);
template TensorT<float> embed_condition(const DenoiserSpec&, const ParamSetT<float>&,
                                        const std::vector<int>&);
template TensorT<double> embed_condition(const DenoiserSpec&, const ParamSetT<double>&,
                                         const std::vector<int>&);

}  // namespace pgdd
