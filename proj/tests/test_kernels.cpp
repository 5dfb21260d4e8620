#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "pgdd/kernels.hpp"
#include "pgdd/rng.hpp"

using namespace pgdd;

namespace {

std::vector<float> randf(RandomStream& rs, size_t n, double scale = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rs.normal() * scale);
  return v;
}

// Sizes chosen to hit empty, sub-lane, one-lane, and tail cases.
const size_t kSizes[] = {0, 1, 3, 7, 8, 9, 15, 16, 17, 31, 33, 100, 257};

void check_close(const std::vector<float>& a, const std::vector<float>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(std::fabs(static_cast<double>(a[i]) - b[i]) <=
          tol * (1.0 + std::fabs(static_cast<double>(b[i]))));
}

}  // namespace

TEST_CASE("selected elementwise kernels match the scalar reference") {
  RandomStream rs(11, "test");
  const kern::Ops& fast = kern::ops();
  const kern::Ops& ref = kern::scalar_ops();
  for (size_t n : kSizes) {
    auto x = randf(rs, n), y = randf(rs, n);
    std::vector<float> a(n), b(n);
    fast.axpby(n, 1.7f, x.data(), -0.3f, y.data(), a.data());
    ref.axpby(n, 1.7f, x.data(), -0.3f, y.data(), b.data());
    check_close(a, b, 1e-6);

    auto ya = y, yb = y;
    fast.add_inplace(n, x.data(), ya.data());
    ref.add_inplace(n, x.data(), yb.data());
    check_close(ya, yb, 1e-6);

    fast.guided_combine(n, 4.0f, x.data(), y.data(), a.data());
    ref.guided_combine(n, 4.0f, x.data(), y.data(), b.data());
    check_close(a, b, 1e-6);
  }
}

TEST_CASE("selected reductions match the scalar reference") {
  RandomStream rs(12, "test");
  for (size_t n : kSizes) {
    auto x = randf(rs, n), y = randf(rs, n);
    double d1 = kern::ops().dot(n, x.data(), y.data());
    double d2 = kern::scalar_ops().dot(n, x.data(), y.data());
    CHECK(std::fabs(d1 - d2) <= 1e-5 * (1.0 + std::fabs(d2)));
    double s1 = kern::ops().sumsq(n, x.data());
    double s2 = kern::scalar_ops().sumsq(n, x.data());
    CHECK(std::fabs(s1 - s2) <= 1e-5 * (1.0 + std::fabs(s2)));
  }
}

TEST_CASE("selected gemm variants match the scalar reference") {
  RandomStream rs(13, "test");
  const size_t dims[] = {1, 2, 3, 5, 8, 13, 17};
  for (size_t M : dims)
    for (size_t N : dims)
      for (size_t K : dims) {
        auto A = randf(rs, M * K), B = randf(rs, K * N), C0 = randf(rs, M * N);
        for (bool acc : {false, true}) {
          auto c1 = C0, c2 = C0;
          kern::ops().gemm_nn(M, N, K, A.data(), B.data(), c1.data(), acc);
          kern::scalar_ops().gemm_nn(M, N, K, A.data(), B.data(), c2.data(), acc);
          check_close(c1, c2, 1e-5 * static_cast<double>(K));

          auto At = randf(rs, K * M);
          c1 = C0, c2 = C0;
          kern::ops().gemm_tn(M, N, K, At.data(), B.data(), c1.data(), acc);
          kern::scalar_ops().gemm_tn(M, N, K, At.data(), B.data(), c2.data(), acc);
          check_close(c1, c2, 1e-5 * static_cast<double>(K));

          auto Bt = randf(rs, N * K);
          c1 = C0, c2 = C0;
          kern::ops().gemm_nt(M, N, K, A.data(), Bt.data(), c1.data(), acc);
          kern::scalar_ops().gemm_nt(M, N, K, A.data(), Bt.data(), c2.data(), acc);
          check_close(c1, c2, 1e-5 * static_cast<double>(K));
        }
      }
}

TEST_CASE("gemm_nn against a hand-computed product") {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  float A[] = {1, 2, 3, 4}, B[] = {5, 6, 7, 8}, C[4];
  kern::gemm_nn<float>(2, 2, 2, A, B, C, false);
  CHECK(C[0] == 19.0f);
  CHECK(C[1] == 22.0f);
  CHECK(C[2] == 43.0f);
  CHECK(C[3] == 50.0f);
}

TEST_CASE("guided_combine exactness at g=0 and at c==u") {
  RandomStream rs(14, "test");
  for (size_t n : {size_t(7), size_t(64), size_t(129)}) {
    auto c = randf(rs, n), u = randf(rs, n);
    std::vector<float> out(n);
    for (const kern::Ops* o : {&kern::ops(), &kern::scalar_ops()}) {
      o->guided_combine(n, 0.0f, c.data(), u.data(), out.data());
      CHECK(std::memcmp(out.data(), c.data(), n * sizeof(float)) == 0);
      o->guided_combine(n, 7.5f, c.data(), c.data(), out.data());
      CHECK(std::memcmp(out.data(), c.data(), n * sizeof(float)) == 0);
    }
  }
}

TEST_CASE("guided_combine scalar example") {
  // c=2, u=1, g=0.9: 2 + 0.9*(2-1) = 2.9
  float c = 2.0f, u = 1.0f, out = 0.0f;
  kern::guided_combine<float>(1, 0.9f, &c, &u, &out);
  CHECK(out == doctest::Approx(2.9).epsilon(1e-6));
}

TEST_CASE("adam kernel matches the scalar reference") {
  RandomStream rs(15, "test");
  for (size_t n : kSizes) {
    auto w0 = randf(rs, n), g = randf(rs, n), m0 = randf(rs, n, 0.1), v0 = randf(rs, n, 0.01);
    for (auto& x : v0) x = std::fabs(x);
    kern::AdamParams p{1e-3f, 0.9f, 0.999f, 1e-8f, 1.0f / (1.0f - 0.9f), 1.0f / (1.0f - 0.999f)};
    auto w1 = w0, m1 = m0, v1 = v0, w2 = w0, m2 = m0, v2 = v0;
    kern::ops().adam_step(n, w1.data(), g.data(), m1.data(), v1.data(), p);
    kern::scalar_ops().adam_step(n, w2.data(), g.data(), m2.data(), v2.data(), p);
    check_close(w1, w2, 1e-6);
    check_close(m1, m2, 1e-6);
    check_close(v1, v2, 1e-6);
  }
}

TEST_CASE("silu value and derivative") {
  double x[] = {-3.0, -1.0, 0.0, 1.0, 3.0};
  double y[5];
  kern::silu<double>(5, x, y);
  CHECK(y[2] == 0.0);
  CHECK(y[3] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
  // Central differences on the reference activation.
  for (double x0 : {-2.0, -0.5, 0.0, 0.7, 2.3}) {
    double h = 1e-6, lo, hi, dy = 1.0, dx = 0.0;
    double xm = x0 - h, xp = x0 + h;
    kern::silu<double>(1, &xm, &lo);
    kern::silu<double>(1, &xp, &hi);
    kern::silu_backward<double>(1, &x0, &dy, &dx);
    CHECK(dx == doctest::Approx((hi - lo) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("simd path reports a known backend") {
  const std::string& p = kern::simd_path();
  CHECK((p == "avx2" || p == "neon" || p == "scalar"));
}
