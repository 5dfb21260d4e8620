// Central-difference gradient checks, all in double. The toy denoiser spec
// is sized to exactly 500 parameters so every single one can be perturbed.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "pgdd/guide.hpp"
#include "pgdd/network.hpp"
#include "pgdd/rng.hpp"

using namespace pgdd;

namespace {

DenoiserSpec toy_spec() {
  DenoiserSpec s;
  s.mode = Backbone::point2d;
  s.widths = {4, 5};
  s.num_classes = 11;
  s.embed_dim = 6;
  s.num_ports = 2;
  return s;
}

TensorD rand_tensor(Shape d, uint64_t seed, double scale = 1.0) {
  TensorD t(std::move(d));
  RandomStream rs(seed, "test");
  for (auto& v : t.data) v = rs.normal() * scale;
  return t;
}

double weighted_sum(const TensorD& e, const TensorD& w) {
  double acc = 0.0;
  for (size_t i = 0; i < e.data.size(); ++i) acc += e.data[i] * w.data[i];
  return acc;
}

double central_diff(double& slot, const std::function<double()>& loss, double h = 1e-5) {
  const double keep = slot;
  slot = keep + h;
  double hi = loss();
  slot = keep - h;
  double lo = loss();
  slot = keep;
  return (hi - lo) / (2.0 * h);
}

// rel error with a floor so near-zero gradients compare absolutely.
double rel_err(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max(std::fabs(numeric), 1e-6);
}

}  // namespace

TEST_CASE("denoiser parameter gradients match finite differences") {
  auto spec = toy_spec();
  auto P = cast_param_set<double>(init_denoiser(spec, 2));
  REQUIRE(P.param_count() == 500);

  TensorD z = rand_tensor(spec.data_shape(3), 61);
  std::vector<double> t = {0.2, 0.5, 0.8};
  std::vector<int> c = {0, 7, kNullClass};
  InjectionSetT<double> inj;
  auto shapes = port_shapes(spec, 3);
  for (size_t p = 0; p < shapes.size(); ++p)
    inj.ports.push_back(rand_tensor(shapes[p], 70 + p, 0.3));
  TensorD W = rand_tensor(spec.data_shape(3), 62);

  auto loss = [&]() { return weighted_sum(denoiser_forward(spec, P, z, t, c, inj), W); };

  P.alloc_grads();
  P.zero_grads();
  DenoiserCache<double> cache;
  TensorD e = denoiser_forward(spec, P, z, t, c, inj, &cache);
  denoiser_backward(spec, P, cache, W, true);

  double max_rel = 0.0;
  for (auto& it : P.items)
    for (size_t i = 0; i < it.value.data.size(); ++i) {
      double num = central_diff(it.value.data[i], loss);
      max_rel = std::max(max_rel, rel_err(it.grad.data[i], num));
    }
  CHECK(max_rel <= 1e-3);
  CHECK(max_rel <= 1e-6);  // double precision should do far better
}

TEST_CASE("injection gradients match finite differences") {
  auto spec = toy_spec();
  auto P = cast_param_set<double>(init_denoiser(spec, 3));
  TensorD z = rand_tensor(spec.data_shape(2), 63);
  std::vector<double> t = {0.3, 0.6};
  std::vector<int> c = {1, 4};
  InjectionSetT<double> inj;
  for (auto& sh : port_shapes(spec, 2)) inj.ports.emplace_back(sh);
  TensorD W = rand_tensor(spec.data_shape(2), 64);

  auto loss = [&]() { return weighted_sum(denoiser_forward(spec, P, z, t, c, inj), W); };

  DenoiserCache<double> cache;
  denoiser_forward(spec, P, z, t, c, inj, &cache);
  InjectionSetT<double> dinj;
  denoiser_backward_frozen(spec, P, cache, W, &dinj);
  REQUIRE(dinj.ports.size() == inj.ports.size());

  double max_rel = 0.0;
  for (size_t p = 0; p < inj.ports.size(); ++p)
    for (size_t i = 0; i < inj.ports[p].data.size(); ++i) {
      double num = central_diff(inj.ports[p].data[i], loss);
      max_rel = std::max(max_rel, rel_err(dinj.ports[p].data[i], num));
    }
  CHECK(max_rel <= 1e-6);
}

TEST_CASE("guide parameter gradients match finite differences") {
  auto base = toy_spec();
  for (GuideVariant variant : {GuideVariant::tiny, GuideVariant::full}) {
    CAPTURE(static_cast<int>(variant));
    GuideSpec gs = default_guide_spec(variant, base);
    gs.zero_init = false;  // exercise the port projections too
    auto G = cast_param_set<double>(init_guide(gs, 4));
    TensorD z = rand_tensor(base.data_shape(2), 65);
    std::vector<double> g = {3.0, 7.0};
    std::vector<double> t = {0.25, 0.75};
    std::vector<int> c = {2, kNullClass};
    std::vector<TensorD> W;
    auto shapes = port_shapes(base, 2);
    for (size_t p = 0; p < shapes.size(); ++p) W.push_back(rand_tensor(shapes[p], 80 + p));

    auto loss = [&]() {
      auto inj = guide_forward(gs, G, g, z, t, c);
      double acc = 0.0;
      for (size_t p = 0; p < inj.ports.size(); ++p) acc += weighted_sum(inj.ports[p], W[p]);
      return acc;
    };

    G.alloc_grads();
    G.zero_grads();
    GuideCache<double> cache;
    guide_forward(gs, G, g, z, t, c, &cache);
    InjectionSetT<double> dinj;
    for (auto& w : W) dinj.ports.push_back(w);
    guide_backward(gs, G, cache, dinj);

    double max_rel = 0.0;
    for (auto& it : G.items)
      for (size_t i = 0; i < it.value.data.size(); ++i) {
        double num = central_diff(it.value.data[i], loss);
        max_rel = std::max(max_rel, rel_err(it.grad.data[i], num));
      }
    CHECK(max_rel <= 1e-6);
  }
}

TEST_CASE("chained guide-through-frozen-base gradients match finite differences") {
  // The exact backward path used by distillation: d_eps -> d_injections on
  // the frozen base, then into the guide's parameters.
  auto base = toy_spec();
  auto B = cast_param_set<double>(init_denoiser(base, 5));
  GuideSpec gs = default_guide_spec(GuideVariant::tiny, base);
  gs.zero_init = false;
  auto G = cast_param_set<double>(init_guide(gs, 6));

  TensorD z = rand_tensor(base.data_shape(2), 66);
  std::vector<double> g = {2.5, 6.5};
  std::vector<double> t = {0.35, 0.65};
  std::vector<int> c = {0, 9};
  TensorD W = rand_tensor(base.data_shape(2), 67);

  auto loss = [&]() {
    auto inj = guide_forward(gs, G, g, z, t, c);
    return weighted_sum(denoiser_forward(base, B, z, t, c, inj), W);
  };

  G.alloc_grads();
  G.zero_grads();
  GuideCache<double> gcache;
  auto inj = guide_forward(gs, G, g, z, t, c, &gcache);
  DenoiserCache<double> bcache;
  denoiser_forward(base, B, z, t, c, inj, &bcache);
  InjectionSetT<double> dinj;
  denoiser_backward_frozen(base, B, bcache, W, &dinj);
  guide_backward(gs, G, gcache, dinj);
  CHECK_FALSE(B.grads_allocated());

  double max_rel = 0.0;
  for (auto& it : G.items)
    for (size_t i = 0; i < it.value.data.size(); ++i) {
      double num = central_diff(it.value.data[i], loss);
      max_rel = std::max(max_rel, rel_err(it.grad.data[i], num));
    }
  CHECK(max_rel <= 1e-3);
  // the composed network roughly squares the finite-difference noise floor
  CHECK(max_rel <= 1e-5);
}
