#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "pgdd/checkpoint.hpp"
#include "pgdd/dataset.hpp"
#include "pgdd/oracle.hpp"

using namespace pgdd;
namespace fs = std::filesystem;

TEST_CASE("mixture sampling is a pure function of spec, n, and seed") {
  auto mix = ring_mixture(2, 2.0, 0.05);
  Dataset a = sample_mixture(mix, 256, 3);
  Dataset b = sample_mixture(mix, 256, 3);
  CHECK(std::memcmp(a.x.ptr(), b.x.ptr(), static_cast<size_t>(a.x.numel()) * sizeof(float)) == 0);
  CHECK(a.labels == b.labels);
  Dataset c = sample_mixture(mix, 256, 4);
  CHECK(std::memcmp(a.x.ptr(), c.x.ptr(), static_cast<size_t>(a.x.numel()) * sizeof(float)) != 0);
}

TEST_CASE("mixture draws are balanced round-robin and land on their components") {
  const int K = 3;
  auto mix = ring_mixture(K, 2.0, 0.05);
  const int64_t n = 4096 * 3 / 2;  // divisible by 3
  Dataset d = sample_mixture(mix, n, 9);
  CHECK(d.num_classes == K);
  CHECK(d.x.dims == Shape{n, 2});
  for (int64_t i = 0; i < n; ++i) CHECK(d.labels[static_cast<size_t>(i)] == i % K);

  // per-class sample means vs the ring's component means; se ~ sqrt(var/n_k)
  for (int k = 0; k < K; ++k) {
    double mx = 0.0, my = 0.0;
    int64_t cnt = 0;
    for (int64_t i = k; i < n; i += K) {
      mx += d.x(i, 0);
      my += d.x(i, 1);
      ++cnt;
    }
    mx /= static_cast<double>(cnt);
    my /= static_cast<double>(cnt);
    const auto& comp = mix.classes[static_cast<size_t>(k)][0];
    CHECK(std::fabs(mx - comp.mean[0]) < 0.05);
    CHECK(std::fabs(my - comp.mean[1]) < 0.05);

    double vx = 0.0;
    for (int64_t i = k; i < n; i += K) vx += (d.x(i, 0) - mx) * (d.x(i, 0) - mx);
    vx /= static_cast<double>(cnt - 1);
    CHECK(vx == doctest::Approx(0.05).epsilon(0.2));
  }
}

TEST_CASE("dataset validation") {
  Dataset d = sample_mixture(ring_mixture(2, 2.0, 0.05), 16, 0);
  CHECK_NOTHROW(d.validate());
  Dataset bad = d;
  bad.num_classes = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = d;
  bad.labels.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = d;
  bad.labels[0] = 5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = d;
  bad.x = TensorF({16, 2, 2});  // rank 3 is neither points nor images
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(sample_mixture(ring_mixture(2, 2.0, 0.05), 0, 0), std::invalid_argument);
}

TEST_CASE("shape corpus renders distinguishable classes") {
  Dataset d = make_shapes16(4, 64, 5);
  CHECK(d.x.dims == Shape{64, 1, 16, 16});
  for (int64_t i = 0; i < 64; ++i) CHECK(d.labels[static_cast<size_t>(i)] == i % 4);

  Dataset d2 = make_shapes16(4, 64, 5);
  CHECK(std::memcmp(d.x.ptr(), d2.x.ptr(), static_cast<size_t>(d.x.numel()) * sizeof(float)) == 0);

  // backgrounds sit near -0.5, foregrounds are positive, values stay bounded
  int64_t fg = 0, bg = 0;
  for (float v : d.x.data) {
    CHECK(v > -1.0f);
    CHECK(v < 1.5f);
    if (v > 0.2f) ++fg;
    if (v < -0.3f) ++bg;
  }
  CHECK(fg > 64 * 10);   // every image has a lit primitive
  CHECK(bg > 64 * 100);  // most pixels stay background

  // the disk (class 0) is filled at its own centroid; the box outline (1) is
  // hollow there, whatever the per-image center jitter did
  for (int64_t i = 0; i < 64; ++i) {
    int cls = d.labels[static_cast<size_t>(i)];
    if (cls > 1) continue;
    double sr = 0.0, sc = 0.0, cnt = 0.0;
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c)
        if (d.x(i, 0, r, c) > 0.2f) {
          sr += r;
          sc += c;
          cnt += 1.0;
        }
    REQUIRE(cnt > 0.0);
    int cr = static_cast<int>(std::lround(sr / cnt));
    int cc = static_cast<int>(std::lround(sc / cnt));
    if (cls == 0) CHECK(d.x(i, 0, cr, cc) > 0.2f);
    if (cls == 1) CHECK(d.x(i, 0, cr, cc) < 0.0f);
  }

  CHECK_THROWS_AS(make_shapes16(9, 8, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_shapes16(0, 8, 0), std::invalid_argument);
}

TEST_CASE("domain shifts transform the mixture spec, not the samples") {
  auto mix = ring_mixture(2, 2.0, 0.05);

  auto rot = rotate_mixture(mix, 45.0);
  const double r = 2.0 / std::sqrt(2.0);
  CHECK(rot.classes[0][0].mean[0] == doctest::Approx(r).epsilon(1e-12));
  CHECK(rot.classes[0][0].mean[1] == doctest::Approx(r).epsilon(1e-12));
  CHECK(rot.classes[1][0].mean[0] == doctest::Approx(-r).epsilon(1e-9));
  CHECK(rot.classes[0][0].var[0] == 0.05);

  auto rot360 = rotate_mixture(mix, 360.0);
  CHECK(rot360.classes[0][0].mean[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::fabs(rot360.classes[0][0].mean[1]) < 1e-12);

  auto big = scale_mixture(mix, 1.5);
  CHECK(big.classes[0][0].mean[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(big.classes[0][0].var[0] == 0.05);  // spread is untouched
  CHECK_THROWS_AS(scale_mixture(mix, 0.0), std::invalid_argument);

  auto aniso = mix;
  aniso.classes[0][0].var = {0.05, 0.2};
  CHECK_THROWS_AS(rotate_mixture(aniso, 45.0), std::invalid_argument);
}

TEST_CASE("polarity inversion negates every pixel") {
  Dataset d = make_shapes16(2, 8, 1);
  Dataset inv = invert_polarity(d);
  CHECK(inv.labels == d.labels);
  for (size_t i = 0; i < d.x.data.size(); ++i) CHECK(inv.x.data[i] == -d.x.data[i]);
}

TEST_CASE("dataset files round-trip") {
  fs::path dir = fs::temp_directory_path() / "pgdd_test_dataset";
  fs::create_directories(dir);
  fs::path p = dir / "ds.pgdd";

  Dataset d = sample_mixture(ring_mixture(2, 2.0, 0.05), 64, 11);
  save_dataset(d, p.string(), "{\"note\":\"fixture\"}");
  Dataset r = load_dataset(p.string());
  CHECK(r.num_classes == 2);
  CHECK(r.labels == d.labels);
  CHECK(std::memcmp(r.x.ptr(), d.x.ptr(), static_cast<size_t>(d.x.numel()) * sizeof(float)) == 0);

  // a parameter checkpoint is not a dataset
  CheckpointBundle b;
  b.metadata_json = "{\"owner\":\"base\"}";
  b.tensors.push_back({"x", TensorF({1, 2})});
  fs::path q = dir / "notds.pgdd";
  save_checkpoint(b, q.string());
  CHECK_THROWS_AS(load_dataset(q.string()), std::runtime_error);
}
