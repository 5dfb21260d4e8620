#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "pgdd/oracle.hpp"
#include "pgdd/sampler.hpp"
#include "pgdd/schedule.hpp"

using namespace pgdd;

namespace {

MixtureSpec one_gauss(std::vector<double> mean, double var) {
  MixtureSpec m;
  std::vector<double> v(mean.size(), var);
  m.classes = {{MixtureComponent{1.0, std::move(mean), std::move(v)}}};
  return m;
}

}  // namespace

TEST_CASE("mixture validation") {
  MixtureSpec m = one_gauss({0.0, 0.0}, 1.0);
  CHECK_NOTHROW(m.validate());
  CHECK(m.dim() == 2);
  CHECK(m.num_classes() == 1);

  MixtureSpec bad_w = m;
  bad_w.classes[0][0].weight = 0.7;  // class weights must sum to 1
  CHECK_THROWS_AS(bad_w.validate(), std::invalid_argument);

  MixtureSpec bad_v = m;
  bad_v.classes[0][0].var[1] = 0.0;
  CHECK_THROWS_AS(bad_v.validate(), std::invalid_argument);

  MixtureSpec bad_d = m;
  bad_d.classes.push_back({MixtureComponent{1.0, {1.0}, {1.0}}});
  CHECK_THROWS_AS(bad_d.validate(), std::invalid_argument);

  CHECK_THROWS_AS(MixtureSpec{}.validate(), std::invalid_argument);
}

TEST_CASE("ring mixture geometry") {
  MixtureSpec m = ring_mixture(4, 2.0, 0.05);
  CHECK(m.num_classes() == 4);
  CHECK(m.dim() == 2);
  for (int k = 0; k < 4; ++k) {
    REQUIRE(m.classes[static_cast<size_t>(k)].size() == 1);
    const auto& c = m.classes[static_cast<size_t>(k)][0];
    CHECK(std::hypot(c.mean[0], c.mean[1]) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(c.var[0] == 0.05);
    CHECK(c.var[1] == 0.05);
    CHECK(c.weight == 1.0);
  }
  // Distinct angles.
  CHECK(std::fabs(m.classes[0][0].mean[0] - m.classes[1][0].mean[0]) +
            std::fabs(m.classes[0][0].mean[1] - m.classes[1][0].mean[1]) >
        0.1);
  CHECK_THROWS_AS(ring_mixture(0, 2.0, 0.05), std::invalid_argument);
}

TEST_CASE("single-Gaussian eps has the closed form") {
  // alpha = sigma = 1/sqrt(2) at t=0.5 (cosine); mu=0, v=1, z=1:
  // posterior shrinkage alpha*v/(alpha^2 v + sigma^2) = 1/sqrt(2),
  // eps* = (1 - 1/2)/(1/sqrt(2)) = 1/sqrt(2).
  NoiseSchedule s;
  MixtureSpec m = one_gauss({0.0}, 1.0);
  TensorD z({1, 1});
  z(0, 0) = 1.0;
  TensorD e = analytic_eps(m, z, {0.5}, {0}, s);
  CHECK(e(0, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));

  // General closed form at several (t, z, mu, v).
  for (double t : {0.1, 0.4, 0.8}) {
    auto [a, sg] = alpha_sigma(s, t);
    for (double mu : {-1.0, 0.3}) {
      for (double v : {0.2, 1.7}) {
        MixtureSpec g = one_gauss({mu}, v);
        TensorD zz({1, 1});
        zz(0, 0) = 0.8;
        double shrink = a * v / (a * a * v + sg * sg);
        double post = mu + shrink * (0.8 - a * mu);
        double expect = (0.8 - a * post) / sg;
        TensorD ee = analytic_eps(g, zz, {t}, {0}, s);
        CHECK(ee(0, 0) == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("marginal eps vanishes at the symmetry point") {
  NoiseSchedule s;
  MixtureSpec m = ring_mixture(2, 2.0, 0.05);  // components mirror through 0
  TensorD z({1, 2});
  TensorD e0 = analytic_eps(m, z, {0.5}, {kNullClass}, s);
  CHECK(e0(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(e0(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  // Conditional branches at the same point are mirror images.
  TensorD ca = analytic_eps(m, z, {0.5}, {0}, s);
  TensorD cb = analytic_eps(m, z, {0.5}, {1}, s);
  CHECK(ca(0, 0) == doctest::Approx(-cb(0, 0)).epsilon(1e-10));
  CHECK(ca(0, 1) == doctest::Approx(-cb(0, 1)).epsilon(1e-10));
}

TEST_CASE("eps matches the score of the diffused density") {
  // eps*(z) = -sigma * d/dz log q_t(z), checked by central differences.
  NoiseSchedule sched;
  MixtureSpec m = ring_mixture(3, 1.5, 0.3);
  const double h = 1e-5;
  for (double t : {0.2, 0.6, 0.9}) {
    auto [a, sg] = alpha_sigma(sched, t);
    for (int c : {0, 1, kNullClass}) {
      double z0[2] = {0.7, -0.4};
      TensorD z({1, 2});
      z(0, 0) = z0[0];
      z(0, 1) = z0[1];
      TensorD e = analytic_eps(m, z, {t}, {c}, sched);
      for (int d = 0; d < 2; ++d) {
        double zp[2] = {z0[0], z0[1]}, zm[2] = {z0[0], z0[1]};
        zp[d] += h;
        zm[d] -= h;
        double grad = (diffused_log_density(m, zp, 2, t, c, sched) -
                       diffused_log_density(m, zm, 2, t, c, sched)) /
                      (2 * h);
        CHECK(e(0, d) == doctest::Approx(-sg * grad).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("small variance collapses to the noise residual") {
  // v -> 0: posterior mean -> mu, eps -> (z - alpha*mu)/sigma.
  NoiseSchedule s;
  MixtureSpec m = one_gauss({1.2}, 1e-12);
  double t = 0.5;
  auto [a, sg] = alpha_sigma(s, t);
  TensorD z({1, 1});
  z(0, 0) = 0.3;
  TensorD e = analytic_eps(m, z, {t}, {0}, s);
  CHECK(e(0, 0) == doctest::Approx((0.3 - a * 1.2) / sg).epsilon(1e-6));
}

TEST_CASE("vanishing sigma is a domain error") {
  NoiseSchedule s;
  s.t_min = 1e-12;
  MixtureSpec m = one_gauss({0.0}, 1.0);
  TensorD z({1, 1});
  CHECK_THROWS_AS(analytic_eps(m, z, {1e-12}, {0}, s), std::domain_error);
}

TEST_CASE("class ids are checked") {
  NoiseSchedule s;
  MixtureSpec m = ring_mixture(2, 1.0, 0.1);
  TensorD z({1, 2});
  CHECK_THROWS_AS(analytic_eps(m, z, {0.5}, {2}, s), std::invalid_argument);
  CHECK_THROWS_AS(analytic_eps(m, z, {0.5}, {-7}, s), std::invalid_argument);
}

TEST_CASE("oracle cfg target combines the two branches") {
  NoiseSchedule s;
  MixtureSpec m = ring_mixture(2, 2.0, 0.2);
  TensorD z({2, 2});
  z(0, 0) = 0.5;
  z(1, 1) = -0.8;
  std::vector<double> t = {0.3, 0.7};
  std::vector<int> c = {0, 1};
  double g = 4.0;
  TensorD target = oracle_cfg_target(m, z, t, c, g, s);
  TensorD cond = analytic_eps(m, z, t, c, s);
  TensorD null = analytic_eps(m, z, t, {kNullClass, kNullClass}, s);
  TensorD manual = cfg_combine(cond, null, g);
  for (size_t i = 0; i < manual.data.size(); ++i)
    CHECK(target.data[i] == doctest::Approx(manual.data[i]).epsilon(1e-12));
}

TEST_CASE("oracle sampling is deterministic and lands near the data") {
  NoiseSchedule s;
  MixtureSpec m = one_gauss({1.0, -1.0}, 0.04);
  TimestepGrid grid = timestep_grid(s, 32);
  std::vector<int> c(64, 0);
  SampleTrace a = oracle_sample(m, s, grid, c, 0.0, 5);
  SampleTrace b = oracle_sample(m, s, grid, c, 0.0, 5);
  CHECK(std::memcmp(a.final_sample().ptr(), b.final_sample().ptr(),
                    sizeof(float) * a.final_sample().data.size()) == 0);
  CHECK(a.steps() == 32);
  double mx = 0.0, my = 0.0;
  for (int i = 0; i < 64; ++i) {
    mx += a.final_sample()(i, 0);
    my += a.final_sample()(i, 1);
  }
  mx /= 64;
  my /= 64;
  CHECK(mx == doctest::Approx(1.0).epsilon(0.15));
  CHECK(my == doctest::Approx(-1.0).epsilon(0.15));
}
