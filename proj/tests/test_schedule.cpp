#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "pgdd/schedule.hpp"

using namespace pgdd;

TEST_CASE("cosine schedule matches its closed form") {
  NoiseSchedule s;  // cosine, [1e-3, 0.999]
  for (double t : {0.001, 0.1, 0.25, 0.5, 0.9, 0.999}) {
    auto [a, sg] = alpha_sigma(s, t);
    CHECK(a == doctest::Approx(std::cos(M_PI * t / 2.0)).epsilon(1e-15));
    CHECK(sg == doctest::Approx(std::sin(M_PI * t / 2.0)).epsilon(1e-15));
  }
}

TEST_CASE("variance preserving identity") {
  for (ScheduleKind k : {ScheduleKind::cosine, ScheduleKind::linear_snr}) {
    NoiseSchedule s;
    s.kind = k;
    for (int i = 0; i <= 100; ++i) {
      double t = s.t_min + (s.t_max - s.t_min) * i / 100.0;
      auto [a, sg] = alpha_sigma(s, t);
      CHECK(a * a + sg * sg == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(a > 0.0);
      CHECK(sg > 0.0);
    }
  }
}

TEST_CASE("log-SNR value at t=0.25") {
  // 2*ln(cot(pi/8)) for the cosine schedule, frozen to the digit.
  NoiseSchedule s;
  CHECK(snr(s, 0.25) == doctest::Approx(1.7627471740390872).epsilon(1e-13));
}

TEST_CASE("log-SNR is strictly decreasing") {
  for (ScheduleKind k : {ScheduleKind::cosine, ScheduleKind::linear_snr}) {
    NoiseSchedule s;
    s.kind = k;
    double prev = snr(s, s.t_min);
    for (int i = 1; i <= 200; ++i) {
      double t = s.t_min + (s.t_max - s.t_min) * i / 200.0;
      double cur = snr(s, t);
      CHECK(cur < prev);
      prev = cur;
    }
  }
}

TEST_CASE("linear_snr interpolates the cosine endpoints") {
  NoiseSchedule cos_s, lin_s;
  lin_s.kind = ScheduleKind::linear_snr;
  CHECK(snr(lin_s, lin_s.t_min) == doctest::Approx(snr(cos_s, cos_s.t_min)).epsilon(1e-12));
  CHECK(snr(lin_s, lin_s.t_max) == doctest::Approx(snr(cos_s, cos_s.t_max)).epsilon(1e-12));
  double mid = 0.5 * (lin_s.t_min + lin_s.t_max);
  double expect = 0.5 * (snr(cos_s, cos_s.t_min) + snr(cos_s, cos_s.t_max));
  CHECK(snr(lin_s, mid) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("queries outside the clamp are domain errors") {
  NoiseSchedule s;
  CHECK_THROWS_AS(alpha_sigma(s, -0.1), std::domain_error);
  CHECK_THROWS_AS(alpha_sigma(s, 0.0), std::domain_error);
  CHECK_THROWS_AS(alpha_sigma(s, 1.0), std::domain_error);
  CHECK_THROWS_AS(snr(s, 1.5), std::domain_error);
  // Slack admits endpoint round-off but nothing visible.
  CHECK_NOTHROW(alpha_sigma(s, s.t_min - 1e-13));
  CHECK_NOTHROW(alpha_sigma(s, s.t_max + 1e-13));
}

TEST_CASE("schedule validation") {
  NoiseSchedule s;
  CHECK_NOTHROW(s.validate());
  s.t_min = 0.5;
  s.t_max = 0.4;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.t_min = -0.1;
  s.t_max = 0.9;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("timestep grid hits both endpoints exactly") {
  NoiseSchedule s;
  for (int n : {1, 2, 8, 64}) {
    TimestepGrid g = timestep_grid(s, n);
    REQUIRE(g.steps.size() == static_cast<size_t>(n + 1));
    CHECK(g.steps.front() == s.t_max);
    CHECK(g.steps.back() == s.t_min);
    for (size_t i = 1; i < g.steps.size(); ++i) CHECK(g.steps[i] < g.steps[i - 1]);
    CHECK(g.num_steps() == n);
    CHECK_NOTHROW(g.validate(s));
  }
}

TEST_CASE("grid validation rejects malformed grids") {
  NoiseSchedule s;
  TimestepGrid g;
  g.steps = {0.5};
  CHECK_THROWS_AS(g.validate(s), std::invalid_argument);
  g.steps = {0.2, 0.5};  // increasing
  CHECK_THROWS_AS(g.validate(s), std::invalid_argument);
  g.steps = {0.9, 0.5};  // endpoints off the clamp bounds
  CHECK_THROWS_AS(g.validate(s), std::invalid_argument);
  CHECK_THROWS_AS(timestep_grid(s, 0), std::invalid_argument);
}

TEST_CASE("diffuse applies one (alpha, sigma) pair per call") {
  NoiseSchedule s;
  TensorF x({2, 2}), eps({2, 2});
  float xv[] = {1.0f, -2.0f, 0.5f, 3.0f};
  float ev[] = {0.1f, 0.2f, -0.3f, 0.4f};
  for (int i = 0; i < 4; ++i) {
    x.data[static_cast<size_t>(i)] = xv[i];
    eps.data[static_cast<size_t>(i)] = ev[i];
  }
  double t = 0.3;
  auto [a, sg] = alpha_sigma(s, t);
  TensorF z = diffuse(s, x, eps, t);
  for (int i = 0; i < 4; ++i)
    CHECK(z.data[static_cast<size_t>(i)] ==
          doctest::Approx(a * xv[i] + sg * ev[i]).epsilon(1e-6));
}

TEST_CASE("diffuse_per_sample matches row-wise diffuse") {
  NoiseSchedule s;
  TensorF x({3, 2}), eps({3, 2});
  for (int i = 0; i < 6; ++i) {
    x.data[static_cast<size_t>(i)] = 0.37f * (i + 1);
    eps.data[static_cast<size_t>(i)] = -0.21f * (i - 2);
  }
  std::vector<double> t = {0.2, 0.5, 0.8};
  TensorF z = diffuse_per_sample(s, x, eps, t);
  for (int r = 0; r < 3; ++r) {
    auto [a, sg] = alpha_sigma(s, t[static_cast<size_t>(r)]);
    for (int d = 0; d < 2; ++d)
      CHECK(z(r, d) == doctest::Approx(a * x(r, d) + sg * eps(r, d)).epsilon(1e-6));
  }
}
