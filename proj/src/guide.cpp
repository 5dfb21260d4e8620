#include "pgdd/guide.hpp"

#include <cmath>
#include <stdexcept>

#include "blocks.hpp"
#include "cond.hpp"
#include "layers.hpp"
#include "pgdd/rng.hpp"

namespace pgdd {

void GuideSpec::validate() const {
  base.validate();
  if (variant == GuideVariant::tiny && inner_dim < 2)
    throw std::invalid_argument("tiny guide needs inner_dim >= 2");
}

GuideSpec default_guide_spec(GuideVariant variant, const DenoiserSpec& base) {
  GuideSpec g;
  g.variant = variant;
  g.base = base;
  g.inner_dim = base.mode == Backbone::point2d ? 8 : 16;
  return g;
}

namespace {

void draw_tensor(TensorF& t, RandomStream& rs, double scale) {
  for (auto& v : t.data) v = static_cast<float>(rs.normal() * scale);
}

std::string port_name(size_t p) { return "port" + std::to_string(p); }

}  // namespace

ParamSet init_guide(const GuideSpec& gspec, uint64_t seed) {
  gspec.validate();
  ParamSet ps;
  ps.owner = "guide";
  RandomStream rs(seed, "init", 1);
  const DenoiserSpec& b = gspec.base;
  const int64_t K = b.num_classes;
  const int L = static_cast<int>(b.widths.size());

  auto dense_init = [&](const std::string& prefix, int64_t in, int64_t out, bool zero) {
    TensorF& w = ps.add(prefix + ".w", {in, out});
    if (!zero) draw_tensor(w, rs, 1.0 / std::sqrt(static_cast<double>(in)));
    ps.add(prefix + ".b", {out});
  };

  if (gspec.variant == GuideVariant::tiny) {
    const int64_t D = gspec.inner_dim;
    dense_init("tf.z", D, D, false);
    draw_tensor(ps.add("cls.table", {K + 1, D}), rs, 0.02);
    dense_init("cls.z", D, D, false);
    dense_init("mix.z", D, D, false);
    for (size_t p = 0; p < b.widths.size(); ++p) dense_init(port_name(p), D, b.widths[p], gspec.zero_init);
    return ps;
  }

  // full variant: own conditioning path + an encoder-and-middle copy of the
  // base topology, a guidance hint joining the first pre-activation, and
  // per-port projections off each level's output.
  const int64_t E = b.embed_dim;
  dense_init("time.fc1", E, E, false);
  dense_init("time.fc2", E, E, false);
  draw_tensor(ps.add("cls.table", {K + 1, E}), rs, 0.02);

  if (b.mode == Backbone::point2d) {
    dense_init("hint", 2, b.widths[0], false);
    auto block_init = [&](const std::string& name, int64_t in, int64_t w, int64_t out) {
      dense_init(name + ".a", in, w, false);
      dense_init(name + ".c", E, w, false);
      dense_init(name + ".b", w, out, false);
    };
    int64_t prev = 2;
    for (int l = 1; l <= L; ++l) {
      block_init("enc" + std::to_string(l), prev, b.widths[l - 1], b.widths[l - 1]);
      prev = b.widths[l - 1];
    }
    block_init("mid", b.widths[L - 1], b.widths[L - 1], b.widths[L - 1]);
    for (size_t p = 0; p < b.widths.size(); ++p)
      dense_init(port_name(p), b.widths[p], b.widths[p], gspec.zero_init);
  } else {
    TensorF& hw = ps.add("hint.conv.w", {b.widths[0], 9});
    draw_tensor(hw, rs, 1.0 / 3.0);
    ps.add("hint.conv.b", {b.widths[0]});
    auto conv_init = [&](const std::string& name, int64_t ci, int64_t co) {
      TensorF& w = ps.add(name + ".conv.w", {co, ci * 9});
      draw_tensor(w, rs, 1.0 / std::sqrt(static_cast<double>(ci * 9)));
      ps.add(name + ".conv.b", {co});
      dense_init(name + ".cond", E, co, false);
    };
    int64_t prev = 1;
    for (int l = 1; l <= L; ++l) {
      conv_init("enc" + std::to_string(l), prev, b.widths[l - 1]);
      prev = b.widths[l - 1];
    }
    conv_init("mid", b.widths[L - 1], b.widths[L - 1]);
    for (size_t p = 0; p < b.widths.size(); ++p) {
      TensorF& w = ps.add(port_name(p) + ".w", {b.widths[p], b.widths[p]});
      if (!gspec.zero_init) draw_tensor(w, rs, 1.0 / std::sqrt(static_cast<double>(b.widths[p])));
      ps.add(port_name(p) + ".b", {b.widths[p]});
    }
  }
  return ps;
}

template <typename T>
struct GuideCache<T>::Impl {
  int64_t batch = 0;
  // tiny
  TensorT<T> tf, rowvals, h, u, y0, y;
  std::vector<int> rows;
  // full
  cond::CondPath<T> cp;
  TensorT<T> xg, hint_col;
  std::vector<blocks::DenseBlockCache<T>> dbs;  // enc1..L, mid
  std::vector<blocks::ConvBlockCache<T>> cbs;
  TensorT<T> mid_out;
};

template <typename T>
GuideCache<T>::GuideCache() : impl_(new Impl()) {}
template <typename T>
GuideCache<T>::~GuideCache() = default;
template <typename T>
GuideCache<T>::GuideCache(GuideCache&&) noexcept = default;
template <typename T>
GuideCache<T>& GuideCache<T>::operator=(GuideCache&&) noexcept = default;

template class GuideCache<float>;
template class GuideCache<double>;

namespace {

template <typename T>
InjectionSetT<T> tiny_forward(const GuideSpec& gspec, const ParamSetT<T>& params,
                              const std::vector<double>& g, const std::vector<double>& t,
                              const std::vector<int>& c, typename GuideCache<T>::Impl* ci) {
  const DenoiserSpec& b = gspec.base;
  const int64_t B = static_cast<int64_t>(t.size());
  const int64_t D = gspec.inner_dim;

  TensorT<T> tf = layers::time_features<T>(t, D);
  TensorT<T> a = layers::dense(tf, params.value("tf.z.w"), params.value("tf.z.b"));

  const TensorT<T>& table = params.value("cls.table");
  TensorT<T> rowvals({B, D});
  std::vector<int> rows(static_cast<size_t>(B));
  for (int64_t i = 0; i < B; ++i) {
    int row = cond::resolve_row(b.num_classes, c[static_cast<size_t>(i)]);
    rows[static_cast<size_t>(i)] = row;
    for (int64_t j = 0; j < D; ++j) rowvals(i, j) = table(row, j);
  }
  TensorT<T> h = layers::dense(rowvals, params.value("cls.z.w"), params.value("cls.z.b"));
  kern::add_inplace(static_cast<size_t>(h.numel()), a.ptr(), h.ptr());
  for (int64_t i = 0; i < B; ++i) {
    T gi = static_cast<T>(g[static_cast<size_t>(i)]);
    for (int64_t j = 0; j < D; ++j) h(i, j) += gi;  // gamma = g * ones
  }

  TensorT<T> u = layers::silu(h);
  TensorT<T> y0 = layers::dense(u, params.value("mix.z.w"), params.value("mix.z.b"));
  TensorT<T> y = layers::silu(y0);

  InjectionSetT<T> inj;
  auto shapes = port_shapes(b, B);
  for (size_t p = 0; p < shapes.size(); ++p) {
    TensorT<T> v = layers::dense(y, params.value(port_name(p) + ".w"), params.value(port_name(p) + ".b"));
    if (b.mode == Backbone::point2d) {
      inj.ports.push_back(std::move(v));
    } else {
      TensorT<T> full(shapes[p]);
      layers::add_channel_bias(v, full);
      inj.ports.push_back(std::move(full));
    }
  }
  if (ci) {
    ci->batch = B;
    ci->tf = std::move(tf);
    ci->rowvals = std::move(rowvals);
    ci->rows = std::move(rows);
    ci->h = std::move(h);
    ci->u = std::move(u);
    ci->y0 = std::move(y0);
    ci->y = std::move(y);
  }
  return inj;
}

template <typename T>
void tiny_backward(const GuideSpec& gspec, ParamSetT<T>& params, const typename GuideCache<T>::Impl& ci,
                   const InjectionSetT<T>& d_inj) {
  const DenoiserSpec& b = gspec.base;
  const int64_t D = gspec.inner_dim;
  TensorT<T> dy({ci.batch, D});
  for (size_t p = 0; p < d_inj.ports.size(); ++p) {
    const std::string n = port_name(p);
    if (b.mode == Backbone::point2d) {
      layers::dense_backward(ci.y, params.value(n + ".w"), d_inj.ports[p], &dy, true,
                             &params.grad(n + ".w"), &params.grad(n + ".b"));
    } else {
      TensorT<T> dv({ci.batch, d_inj.ports[p].dims[1]});
      layers::channel_bias_backward(d_inj.ports[p], dv);
      layers::dense_backward(ci.y, params.value(n + ".w"), dv, &dy, true, &params.grad(n + ".w"),
                             &params.grad(n + ".b"));
    }
  }
  TensorT<T> dy0(ci.y0.dims);
  kern::silu_backward(static_cast<size_t>(dy0.numel()), ci.y0.ptr(), dy.ptr(), dy0.ptr());
  TensorT<T> du(ci.u.dims);
  layers::dense_backward(ci.u, params.value("mix.z.w"), dy0, &du, false, &params.grad("mix.z.w"),
                         &params.grad("mix.z.b"));
  TensorT<T> dh(ci.h.dims);
  kern::silu_backward(static_cast<size_t>(dh.numel()), ci.h.ptr(), du.ptr(), dh.ptr());
  layers::dense_backward(ci.tf, params.value("tf.z.w"), dh, static_cast<TensorT<T>*>(nullptr), false,
                         &params.grad("tf.z.w"), &params.grad("tf.z.b"));
  TensorT<T> drow(ci.rowvals.dims);
  layers::dense_backward(ci.rowvals, params.value("cls.z.w"), dh, &drow, false, &params.grad("cls.z.w"),
                         &params.grad("cls.z.b"));
  TensorT<T>& dtable = params.grad("cls.table");
  for (int64_t i = 0; i < ci.batch; ++i)
    kern::add_inplace(static_cast<size_t>(D), drow.ptr() + i * D,
                      dtable.ptr() + ci.rows[static_cast<size_t>(i)] * D);
}

template <typename T>
InjectionSetT<T> full_forward(const GuideSpec& gspec, const ParamSetT<T>& params,
                              const std::vector<double>& g, const TensorT<T>& z,
                              const std::vector<double>& t, const std::vector<int>& c,
                              typename GuideCache<T>::Impl* ci) {
  const DenoiserSpec& b = gspec.base;
  const int64_t B = z.dims.empty() ? 0 : z.dims[0];
  if (z.dims != b.data_shape(B))
    throw std::invalid_argument("full guide needs z shaped " + shape_str(b.data_shape(B)) + ", got " +
                                shape_str(z.dims));
  const int L = static_cast<int>(b.widths.size());

  cond::CondPath<T> cp = cond::forward(params, b.embed_dim, b.num_classes, t, c);

  // guidance hint: g broadcast to the data shape, one affine map, joins the
  // first block's pre-activation.
  TensorT<T> xg(b.data_shape(B));
  for (int64_t i = 0; i < B; ++i) {
    T gi = static_cast<T>(g[static_cast<size_t>(i)]);
    int64_t n = xg.numel() / B;
    T* p = xg.ptr() + i * n;
    for (int64_t k = 0; k < n; ++k) p[k] = gi;
  }
  TensorT<T> hint;
  TensorT<T> hint_col;
  if (b.mode == Backbone::point2d)
    hint = layers::dense(xg, params.value("hint.w"), params.value("hint.b"));
  else
    hint = layers::conv3x3(xg, params.value("hint.conv.w"), params.value("hint.conv.b"), 1, &hint_col);

  if (ci) {
    ci->batch = B;
    ci->cp = cp;
    ci->xg = xg;
    ci->hint_col = std::move(hint_col);
    ci->dbs.assign(b.mode == Backbone::point2d ? static_cast<size_t>(L + 1) : 0, {});
    ci->cbs.assign(b.mode == Backbone::image16 ? static_cast<size_t>(L + 1) : 0, {});
  }

  std::vector<TensorT<T>> levels;  // e1..e{L-1}, then mid output as the deepest
  TensorT<T> h = z;
  if (b.mode == Backbone::point2d) {
    auto refs = [&](const std::string& n) {
      return blocks::DenseBlockRefs<T>{&params.value(n + ".a.w"), &params.value(n + ".a.b"),
                                       &params.value(n + ".c.w"), &params.value(n + ".c.b"),
                                       &params.value(n + ".b.w"), &params.value(n + ".b.b")};
    };
    for (int l = 1; l <= L; ++l) {
      h = blocks::dense_block(h, cp.cond, l == 1 ? &hint : nullptr, refs("enc" + std::to_string(l)),
                              ci ? &ci->dbs[static_cast<size_t>(l - 1)] : nullptr);
      if (l < L) levels.push_back(h);
    }
    TensorT<T> m = blocks::dense_block(h, cp.cond, static_cast<const TensorT<T>*>(nullptr), refs("mid"),
                                       ci ? &ci->dbs[static_cast<size_t>(L)] : nullptr);
    if (ci) ci->mid_out = m;
    levels.push_back(std::move(m));
  } else {
    auto refs = [&](const std::string& n, int stride) {
      return blocks::ConvBlockRefs<T>{&params.value(n + ".conv.w"), &params.value(n + ".conv.b"),
                                      &params.value(n + ".cond.w"), &params.value(n + ".cond.b"), stride};
    };
    for (int l = 1; l <= L; ++l) {
      h = blocks::conv_block(h, cp.cond, l == 1 ? &hint : nullptr,
                             refs("enc" + std::to_string(l), l == 1 ? 1 : 2),
                             ci ? &ci->cbs[static_cast<size_t>(l - 1)] : nullptr);
      if (l < L) levels.push_back(h);
    }
    TensorT<T> m = blocks::conv_block(h, cp.cond, static_cast<const TensorT<T>*>(nullptr), refs("mid", 1),
                                      ci ? &ci->cbs[static_cast<size_t>(L)] : nullptr);
    if (ci) ci->mid_out = m;
    levels.push_back(std::move(m));
  }

  InjectionSetT<T> inj;
  for (size_t p = 0; p < levels.size(); ++p) {
    const std::string n = port_name(p);
    if (b.mode == Backbone::point2d)
      inj.ports.push_back(layers::dense(levels[p], params.value(n + ".w"), params.value(n + ".b")));
    else
      inj.ports.push_back(layers::conv1x1(levels[p], params.value(n + ".w"), params.value(n + ".b")));
  }
  return inj;
}

template <typename T>
void full_backward(const GuideSpec& gspec, ParamSetT<T>& params, const typename GuideCache<T>::Impl& ci,
                   const InjectionSetT<T>& d_inj) {
  const DenoiserSpec& b = gspec.base;
  const int L = static_cast<int>(b.widths.size());
  auto shapes = port_shapes(b, ci.batch);

  // Buffers: de[l-1] is d(e_l) for encoder outputs, dmid is d(mid output).
  // Ports p < L-1 feed de[p]; the deepest port feeds dmid; mid's input grad
  // lands in de[L-1].
  std::vector<TensorT<T>> de;
  for (int l = 1; l <= L; ++l) de.emplace_back(shapes[static_cast<size_t>(l - 1)]);
  TensorT<T> dmid(shapes[static_cast<size_t>(L - 1)]);
  TensorT<T> dcond({ci.batch, b.embed_dim});

  for (size_t p = 0; p < d_inj.ports.size(); ++p) {
    const std::string n = port_name(p);
    const bool deepest = static_cast<int>(p) == L - 1;
    const TensorT<T>& src =
        deepest ? ci.mid_out : (b.mode == Backbone::point2d ? ci.dbs[p + 1].x : ci.cbs[p + 1].x);
    TensorT<T>* dst = deepest ? &dmid : &de[p];
    if (b.mode == Backbone::point2d)
      layers::dense_backward(src, params.value(n + ".w"), d_inj.ports[p], dst, true,
                             &params.grad(n + ".w"), &params.grad(n + ".b"));
    else
      layers::conv1x1_backward(src, params.value(n + ".w"), d_inj.ports[p], dst, true,
                               &params.grad(n + ".w"), &params.grad(n + ".b"));
  }

  TensorT<T> dhint;
  if (b.mode == Backbone::point2d) {
    auto refs = [&](const std::string& n) {
      return blocks::DenseBlockRefs<T>{&params.value(n + ".a.w"), &params.value(n + ".a.b"),
                                       &params.value(n + ".c.w"), &params.value(n + ".c.b"),
                                       &params.value(n + ".b.w"), &params.value(n + ".b.b")};
    };
    auto grads = [&](const std::string& n) {
      return blocks::DenseBlockGrads<T>{&params.grad(n + ".a.w"), &params.grad(n + ".a.b"),
                                        &params.grad(n + ".c.w"), &params.grad(n + ".c.b"),
                                        &params.grad(n + ".b.w"), &params.grad(n + ".b.b")};
    };
    blocks::dense_block_backward(ci.dbs[static_cast<size_t>(L)], ci.cp.cond, dmid, refs("mid"),
                                 grads("mid"), &de[static_cast<size_t>(L - 1)], &dcond,
                                 static_cast<TensorT<T>*>(nullptr));
    for (int l = L; l >= 2; --l)
      blocks::dense_block_backward(ci.dbs[static_cast<size_t>(l - 1)], ci.cp.cond,
                                   de[static_cast<size_t>(l - 1)], refs("enc" + std::to_string(l)),
                                   grads("enc" + std::to_string(l)), &de[static_cast<size_t>(l - 2)],
                                   &dcond, static_cast<TensorT<T>*>(nullptr));
    dhint = TensorT<T>({ci.batch, b.widths[0]});
    blocks::dense_block_backward(ci.dbs[0], ci.cp.cond, de[0], refs("enc1"), grads("enc1"),
                                 static_cast<TensorT<T>*>(nullptr), &dcond, &dhint);
    layers::dense_backward(ci.xg, params.value("hint.w"), dhint, static_cast<TensorT<T>*>(nullptr), false,
                           &params.grad("hint.w"), &params.grad("hint.b"));
  } else {
    auto refs = [&](const std::string& n, int stride) {
      return blocks::ConvBlockRefs<T>{&params.value(n + ".conv.w"), &params.value(n + ".conv.b"),
                                      &params.value(n + ".cond.w"), &params.value(n + ".cond.b"), stride};
    };
    auto grads = [&](const std::string& n) {
      return blocks::ConvBlockGrads<T>{&params.grad(n + ".conv.w"), &params.grad(n + ".conv.b"),
                                       &params.grad(n + ".cond.w"), &params.grad(n + ".cond.b")};
    };
    blocks::conv_block_backward(ci.cbs[static_cast<size_t>(L)], ci.cp.cond, dmid, refs("mid", 1),
                                grads("mid"), &de[static_cast<size_t>(L - 1)], true, &dcond,
                                static_cast<TensorT<T>*>(nullptr));
    for (int l = L; l >= 2; --l)
      blocks::conv_block_backward(ci.cbs[static_cast<size_t>(l - 1)], ci.cp.cond,
                                  de[static_cast<size_t>(l - 1)], refs("enc" + std::to_string(l), 2),
                                  grads("enc" + std::to_string(l)), &de[static_cast<size_t>(l - 2)], true,
                                  &dcond, static_cast<TensorT<T>*>(nullptr));
    dhint = TensorT<T>(ci.cbs[0].pre.dims);
    blocks::conv_block_backward(ci.cbs[0], ci.cp.cond, de[0], refs("enc1", 1), grads("enc1"),
                                static_cast<TensorT<T>*>(nullptr), false, &dcond, &dhint);
    layers::conv3x3_backward(ci.xg, params.value("hint.conv.w"), ci.hint_col, dhint, 1,
                             static_cast<TensorT<T>*>(nullptr), false, &params.grad("hint.conv.w"),
                             &params.grad("hint.conv.b"));
  }
  cond::backward(params, ci.cp, dcond);
}

}  // namespace

template <typename T>
InjectionSetT<T> guide_forward(const GuideSpec& gspec, const ParamSetT<T>& params,
                               const std::vector<double>& g, const TensorT<T>& z,
                               const std::vector<double>& t, const std::vector<int>& c,
                               GuideCache<T>* cache) {
  gspec.validate();
  if (g.size() != t.size() || c.size() != t.size())
    throw std::invalid_argument("guide needs one (g, t, c) triple per sample");
  typename GuideCache<T>::Impl* ci = cache ? &cache->impl() : nullptr;
  if (gspec.variant == GuideVariant::tiny) return tiny_forward(gspec, params, g, t, c, ci);
  return full_forward(gspec, params, g, z, t, c, ci);
}

template <typename T>
void guide_backward(const GuideSpec& gspec, ParamSetT<T>& params, const GuideCache<T>& cache,
                    const InjectionSetT<T>& d_injections) {
  const typename GuideCache<T>::Impl& ci = cache.impl();
  if (ci.batch == 0) throw std::logic_error("guide backward without a cached forward");
  if (!params.grads_allocated()) throw std::logic_error("guide backward: grads not allocated");
  if (d_injections.size() != static_cast<size_t>(gspec.base.num_ports))
    throw std::invalid_argument("guide backward: wrong number of injection gradients");
  if (gspec.variant == GuideVariant::tiny)
    tiny_backward(gspec, params, ci, d_injections);
  else
    full_backward(gspec, params, ci, d_injections);
}

template InjectionSetT<float> guide_forward(const GuideSpec&, const ParamSetT<float>&,
                                            const std::vector<double>&, const TensorT<float>&,
                                            const std::vector<double>&, const std::vector<int>&,
                                            GuideCache<float>*);
template InjectionSetT<double> guide_forward(const GuideSpec&, const ParamSetT<double>&,
                                             const std::vector<double>&, const TensorT<double>&,
                                             const std::vector<double>&, const std::vector<int>&,
                                             GuideCache<double>*);
template void guide_backward(const GuideSpec&, ParamSetT<float>&, const GuideCache<float>&,
                             const InjectionSetT<float>&);
template void guide_backward(const GuideSpec&, ParamSetT<double>&, const GuideCache<double>&,
                             const InjectionSetT<double>&);

}  // namespace pgdd
