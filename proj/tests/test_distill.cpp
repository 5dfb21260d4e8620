#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pgdd/dataset.hpp"
#include "pgdd/distill.hpp"
#include "pgdd/guide.hpp"
#include "pgdd/network.hpp"
#include "pgdd/sampler.hpp"
#include "pgdd/schedule.hpp"

using namespace pgdd;
namespace fs = std::filesystem;

namespace {

DenoiserSpec tiny_spec() {
  DenoiserSpec s;
  s.mode = Backbone::point2d;
  s.widths = {8, 12};
  s.num_classes = 2;
  s.embed_dim = 16;
  s.num_ports = 2;
  return s;
}

Dataset tiny_data(int64_t n = 512, uint64_t seed = 1) {
  return sample_mixture(ring_mixture(2, 2.0, 0.05), n, seed);
}

TrainConfig quick_cfg(int steps, uint64_t seed) {
  TrainConfig c;
  c.batch_size = 16;
  c.steps = steps;
  c.seed = seed;
  c.log_every = 10;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const char* leaf) {
  fs::path d = fs::temp_directory_path() / leaf;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

bool same_values(const ParamSet& a, const ParamSet& b) {
  if (a.items.size() != b.items.size()) return false;
  for (size_t i = 0; i < a.items.size(); ++i) {
    if (a.items[i].name != b.items[i].name) return false;
    if (a.items[i].value.dims != b.items[i].value.dims) return false;
    if (std::memcmp(a.items[i].value.ptr(), b.items[i].value.ptr(),
                    a.items[i].value.data.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("loss weight is one or truncated snr") {
  NoiseSchedule sched;
  for (double t : {0.1, 0.25, 0.5, 0.9})
    CHECK(loss_weight(LossWeighting::constant_one, sched, t) == 1.0);
  // snr(0.25) = cot^2(pi/8) = 3 + 2*sqrt(2)
  CHECK(loss_weight(LossWeighting::truncated_snr, sched, 0.25) ==
        doctest::Approx(3.0 + 2.0 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(loss_weight(LossWeighting::truncated_snr, sched, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(loss_weight(LossWeighting::truncated_snr, sched, 0.75) == 1.0);  // snr < 1 clamps
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.steps = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.learning_rate = -1e-4;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.g_lo = c.g_hi = 4.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.fixed_g = true;  // pinned guidance does not need a range
  CHECK_NOTHROW(c.validate());
  c = TrainConfig{};
  c.cond_dropout_prob = 1.25;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.cond_dropout_prob = -0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.log_every = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("distill round validation and halving") {
  DistillRound r{64, 0};
  CHECK_NOTHROW(r.validate());
  CHECK(r.student_steps() == 32);
  CHECK(DistillRound{2, 3}.student_steps() == 1);
  CHECK_THROWS_AS((DistillRound{0, 0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DistillRound{5, 0}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DistillRound{64, -1}.validate()), std::invalid_argument);
}

TEST_CASE("adam guards and zero learning rate") {
  ParamSet p;
  p.owner = "base";
  auto& w = p.add("w", {4});
  w.data = {1.0f, -2.0f, 0.5f, 3.0f};
  AdamState opt;
  opt.init(p);
  CHECK_THROWS_AS(opt.step(p, 1e-3), std::logic_error);  // no gradient buffers

  p.alloc_grads();
  p.grad("w").data = {1.0f, 1.0f, 1.0f, 1.0f};
  std::vector<float> before = p.value("w").data;
  opt.step(p, 0.0);
  CHECK(std::memcmp(before.data(), p.value("w").data.data(), 4 * sizeof(float)) == 0);
  opt.step(p, 1e-2);
  CHECK(std::memcmp(before.data(), p.value("w").data.data(), 4 * sizeof(float)) != 0);

  ParamSet q;
  q.owner = "base";
  q.add("w", {7});
  q.alloc_grads();
  CHECK_THROWS_AS(opt.step(q, 1e-3), std::logic_error);  // moments sized for p
}

TEST_CASE("adam descends a quadratic") {
  ParamSet p;
  p.owner = "base";
  p.add("w", {1}).data = {0.0f};
  p.alloc_grads();
  AdamState opt;
  opt.init(p);
  for (int i = 0; i < 400; ++i) {
    float w = p.value("w").data[0];
    p.grad("w").data[0] = 2.0f * (w - 3.0f);
    opt.step(p, 0.1);
  }
  CHECK(std::fabs(p.value("w").data[0] - 3.0f) < 0.05f);
  CHECK(opt.steps == 400);
}

TEST_CASE("metrics log buffers and lands on close") {
  fs::path dir = fresh_dir("pgdd_test_metrics");
  {
    MetricsLog log(dir.string());
    CHECK(log.enabled());
    log.record("{\"a\":1}");
    log.record("{\"a\":2}");
    log.record_timing("{\"sec\":0.5}");
    CHECK_FALSE(fs::exists(dir / "metrics.jsonl"));  // nothing lands early
    log.close();
    CHECK(slurp(dir / "metrics.jsonl") == "{\"a\":1}\n{\"a\":2}\n");
    CHECK(slurp(dir / "timing.jsonl") == "{\"sec\":0.5}\n");
  }
  fs::path dir2 = fresh_dir("pgdd_test_metrics2");
  {
    MetricsLog log(dir2.string());
    log.record("{\"b\":3}");
  }  // destructor flushes
  CHECK(slurp(dir2 / "metrics.jsonl") == "{\"b\":3}\n");
  MetricsLog off;
  CHECK_FALSE(off.enabled());
}

TEST_CASE("base training runs, logs, and is seed-deterministic") {
  auto spec = tiny_spec();
  auto data = tiny_data();
  auto cfg = quick_cfg(30, 5);
  fs::path dir = fresh_dir("pgdd_test_train_base");

  MetricsLog log(dir.string());
  ParamSet a = train_base(spec, data, default_schedule(), cfg, &log);
  log.close();
  CHECK(a.owner == "base");
  CHECK_FALSE(a.grads_allocated());  // trained sets come back values-only
  CHECK(a.param_count() == init_denoiser(spec, 5).param_count());
  CHECK(a.value_checksum() != init_denoiser(spec, 5).value_checksum());

  ParamSet b = train_base(spec, data, default_schedule(), cfg);
  CHECK(a.value_checksum() == b.value_checksum());
  cfg.seed = 6;
  ParamSet c = train_base(spec, data, default_schedule(), cfg);
  CHECK(a.value_checksum() != c.value_checksum());

  std::vector<int> steps;
  std::istringstream lines(slurp(dir / "metrics.jsonl"));
  for (std::string line; std::getline(lines, line);) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.at("phase") == "train-base");
    CHECK(std::isfinite(j.at("loss").get<double>()));
    steps.push_back(j.at("step").get<int>());
  }
  CHECK(steps == std::vector<int>{0, 10, 20, 29});
}

TEST_CASE("base training rejects mismatched data") {
  auto spec = tiny_spec();
  auto cfg = quick_cfg(1, 0);
  Dataset wrong_k = sample_mixture(ring_mixture(3, 2.0, 0.05), 64, 1);
  CHECK_THROWS_WITH_AS(train_base(spec, wrong_k, default_schedule(), cfg),
                       "dataset class count does not match denoiser spec", std::invalid_argument);
  DenoiserSpec img;
  img.mode = Backbone::image16;
  img.widths = {4, 6, 8};
  img.num_classes = 2;
  img.embed_dim = 12;
  img.num_ports = 3;
  CHECK_THROWS_AS(train_base(img, tiny_data(64), default_schedule(), cfg), std::invalid_argument);
}

TEST_CASE("finetune with zero steps is the identity, owner is enforced") {
  auto spec = tiny_spec();
  auto data = tiny_data();
  ParamSet base = train_base(spec, data, default_schedule(), quick_cfg(20, 7));

  ParamSet same = finetune_base(spec, base, data, default_schedule(), quick_cfg(0, 7));
  CHECK(same_values(base, same));

  ParamSet moved = finetune_base(spec, base, data, default_schedule(), quick_cfg(10, 7));
  CHECK_FALSE(same_values(base, moved));
  CHECK(moved.owner == "base");

  ParamSet fake = base;
  fake.owner = "guide";
  CHECK_THROWS_WITH_AS(finetune_base(spec, fake, data, default_schedule(), quick_cfg(0, 7)),
                       "finetune_base needs a parameter set owned by \"base\"", std::invalid_argument);
}

TEST_CASE("zero-init distillation step echoes the closed-form residual") {
  // With a zero-init guide the student pass equals the conditional pass, so
  // the per-sample residual must be exactly g^2 * ||e_c - e_u||^2.
  auto spec = tiny_spec();
  auto data = tiny_data(128, 2);
  ParamSet base = init_denoiser(spec, 9);
  GuideSpec gspec = default_guide_spec(GuideVariant::tiny, spec);
  ParamSet guide = init_guide(gspec, 3);
  guide.alloc_grads();
  AdamState opt;
  opt.init(guide);

  const int B = 16;
  Shape bs = spec.data_shape(B);
  TensorF x(bs);
  std::memcpy(x.ptr(), data.x.ptr(), static_cast<size_t>(x.numel()) * sizeof(float));
  std::vector<int> c(data.labels.begin(), data.labels.begin() + B);

  TrainConfig cfg = quick_cfg(1, 0);
  RandomStream rs(7, "training", 1);
  DistillStepStats st = cfg_distill_step(spec, base, gspec, guide, opt, x, c, default_schedule(), cfg, rs);

  TensorF ec = denoiser_forward(spec, base, st.z, st.t, c);
  std::vector<int> nullc(c.size(), kNullClass);
  TensorF eu = denoiser_forward(spec, base, st.z, st.t, nullc);
  const int64_t row = ec.numel() / B;
  double loss = 0.0;
  for (int i = 0; i < B; ++i) {
    double delta = 0.0;
    for (int64_t d = 0; d < row; ++d) {
      double diff = static_cast<double>(ec.ptr()[i * row + d]) -
                    static_cast<double>(eu.ptr()[i * row + d]);
      delta += diff * diff;
    }
    double expect = st.g[static_cast<size_t>(i)] * st.g[static_cast<size_t>(i)] * delta;
    CHECK(st.residual[static_cast<size_t>(i)] ==
          doctest::Approx(expect).epsilon(1e-9));
    loss += expect / B;
  }
  CHECK(st.loss == doctest::Approx(loss).epsilon(1e-9));
  CHECK(guide.value_checksum() != init_guide(gspec, 3).value_checksum());  // the step updated it
}

TEST_CASE("distillation step guards") {
  auto spec = tiny_spec();
  ParamSet base = init_denoiser(spec, 9);
  GuideSpec gspec = default_guide_spec(GuideVariant::tiny, spec);
  ParamSet guide = init_guide(gspec, 3);
  AdamState opt;
  opt.init(guide);
  TensorF x(spec.data_shape(4));
  std::vector<int> c = {0, 1, 0, 1};
  TrainConfig cfg = quick_cfg(1, 0);
  RandomStream rs(7, "training", 1);

  ParamSet hot = base;
  hot.alloc_grads();
  CHECK_THROWS_WITH_AS(cfg_distill_step(spec, hot, gspec, guide, opt, x, c, default_schedule(), cfg, rs),
                       "frozen base must not carry gradient buffers during distillation",
                       std::logic_error);
  std::vector<int> short_c = {0, 1};
  CHECK_THROWS_AS(cfg_distill_step(spec, base, gspec, guide, opt, x, short_c, default_schedule(), cfg, rs),
                  std::invalid_argument);
}

TEST_CASE("guide distillation is deterministic and leaves the base frozen") {
  auto spec = tiny_spec();
  auto data = tiny_data();
  ParamSet base = train_base(spec, data, default_schedule(), quick_cfg(20, 4));
  GuideSpec gspec = default_guide_spec(GuideVariant::tiny, spec);
  const uint64_t base_before = base.value_checksum();

  auto cfg = quick_cfg(25, 8);
  fs::path dir = fresh_dir("pgdd_test_distill_cfg");
  MetricsLog log(dir.string());
  ParamSet g1 = distill_cfg(spec, base, gspec, data, default_schedule(), cfg, &log);
  log.close();
  CHECK(base.value_checksum() == base_before);
  CHECK(g1.owner == "guide");
  CHECK_FALSE(g1.grads_allocated());

  ParamSet g2 = distill_cfg(spec, base, gspec, data, default_schedule(), cfg);
  CHECK(g1.value_checksum() == g2.value_checksum());

  int64_t counted = 0;
  bool first = true;
  std::istringstream lines(slurp(dir / "metrics.jsonl"));
  for (std::string line; std::getline(lines, line);) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.at("phase") == "distill-cfg");
    auto cnt = j.at("bucket_count").get<std::vector<int64_t>>();
    auto mean = j.at("bucket_mean").get<std::vector<double>>();
    REQUIRE(cnt.size() == 4);
    REQUIRE(mean.size() == 4);
    int64_t line_total = cnt[0] + cnt[1] + cnt[2] + cnt[3];
    if (first) CHECK(line_total == cfg.batch_size);  // step 0 logs one batch
    first = false;
    counted += line_total;
    for (int k = 0; k < 4; ++k)
      if (cnt[static_cast<size_t>(k)] > 0) CHECK(mean[static_cast<size_t>(k)] > 0.0);
  }
  CHECK(counted == int64_t{25} * cfg.batch_size);
}

TEST_CASE("fixed-guidance distillation pins every draw to one bucket") {
  auto spec = tiny_spec();
  auto data = tiny_data();
  ParamSet base = train_base(spec, data, default_schedule(), quick_cfg(20, 4));
  GuideSpec gspec = default_guide_spec(GuideVariant::tiny, spec);

  auto cfg = quick_cfg(10, 8);
  fs::path dir = fresh_dir("pgdd_test_distill_fixed");
  MetricsLog log(dir.string());
  ParamSet gf = distill_fixed_guidance(spec, base, gspec, data, default_schedule(), cfg, 8.0, &log);
  log.close();

  std::istringstream lines(slurp(dir / "metrics.jsonl"));
  for (std::string line; std::getline(lines, line);) {
    auto cnt = nlohmann::json::parse(line).at("bucket_count").get<std::vector<int64_t>>();
    CHECK(cnt[0] == 0);
    CHECK(cnt[1] == 0);
    CHECK(cnt[2] == 0);
    CHECK(cnt[3] > 0);  // g = 8 lands in the top bucket
  }

  ParamSet gr = distill_cfg(spec, base, gspec, data, default_schedule(), cfg);
  CHECK(gf.value_checksum() != gr.value_checksum());
}

TEST_CASE("guide distillation rejects mismatched specs and owners") {
  auto spec = tiny_spec();
  auto data = tiny_data(128, 2);
  ParamSet base = init_denoiser(spec, 9);
  GuideSpec gspec = default_guide_spec(GuideVariant::tiny, spec);
  auto cfg = quick_cfg(1, 0);

  GuideSpec other = gspec;
  other.base.widths = {8, 16};
  CHECK_THROWS_WITH_AS(distill_cfg(spec, base, other, data, default_schedule(), cfg),
                       "guide spec targets a different base architecture", std::invalid_argument);

  ParamSet fake = base;
  fake.owner = "guide";
  CHECK_THROWS_WITH_AS(distill_cfg(spec, fake, gspec, data, default_schedule(), cfg),
                       "distillation requires a parameter set owned by \"base\", got \"guide\"",
                       std::invalid_argument);
}

TEST_CASE("progressive target inverts the teacher's two-step endpoint") {
  NoiseSchedule sched;
  TimestepGrid grid = timestep_grid(sched, 8);
  const double t = grid.steps[2];
  const double mid = grid.steps[3];
  const double s = grid.steps[4];

  TensorD z({3, 2});
  RandomStream rs(19, "test");
  for (auto& v : z.data) v = rs.normal();

  TeacherFn<double> teacher = [](const TensorD& zz, double tt) {
    TensorD e(zz.dims);
    for (size_t i = 0; i < zz.data.size(); ++i) e.data[i] = std::tanh(zz.data[i]) + 0.3 * zz.data[i] + std::sin(tt);
    return e;
  };

  TensorD target = progressive_target<double>(teacher, z, t, s, grid, sched);
  TensorD one_step = ddim_step(z, target, t, s, sched);
  TensorD e1 = teacher(z, t);
  TensorD zm = ddim_step(z, e1, t, mid, sched);
  TensorD e2 = teacher(zm, mid);
  TensorD two_step = ddim_step(zm, e2, mid, s, sched);
  for (size_t i = 0; i < z.data.size(); ++i)
    CHECK(one_step.data[i] ==
          doctest::Approx(two_step.data[i]).epsilon(1e-10));

  // A constant teacher makes the two-step path collapse to one step, so the
  // inverted target must reproduce the constant itself.
  TeacherFn<double> flat = [](const TensorD& zz, double) {
    TensorD e(zz.dims);
    for (auto& v : e.data) v = 0.7;
    return e;
  };
  TensorD flat_target = progressive_target<double>(flat, z, t, s, grid, sched);
  for (double v : flat_target.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("progressive target float instantiation stays close") {
  NoiseSchedule sched;
  TimestepGrid grid = timestep_grid(sched, 8);
  const double t = grid.steps[2];
  const double s = grid.steps[4];
  TensorF z({4, 2});
  RandomStream rs(23, "test");
  for (auto& v : z.data) v = static_cast<float>(rs.normal());

  TeacherFn<float> teacher = [](const TensorF& zz, double tt) {
    TensorF e(zz.dims);
    for (size_t i = 0; i < zz.data.size(); ++i)
      e.data[i] = std::tanh(zz.data[i]) + 0.3f * zz.data[i] + static_cast<float>(std::sin(tt));
    return e;
  };
  TensorF target = progressive_target<float>(teacher, z, t, s, grid, sched);
  TensorF one_step = ddim_step(z, target, t, s, sched);
  TensorF e1 = teacher(z, t);
  TensorF zm = ddim_step(z, e1, t, grid.steps[3], sched);
  TensorF two_step = ddim_step(zm, teacher(zm, grid.steps[3]), grid.steps[3], s, sched);
  for (size_t i = 0; i < z.data.size(); ++i)
    CHECK(one_step.data[i] == doctest::Approx(two_step.data[i]).epsilon(1e-4));
}

TEST_CASE("progressive target grid misuse") {
  NoiseSchedule sched;
  TimestepGrid grid = timestep_grid(sched, 8);
  TensorD z({1, 2});
  TeacherFn<double> flat = [](const TensorD& zz, double) { return TensorD(zz.dims); };

  CHECK_THROWS_WITH_AS(progressive_target<double>(flat, z, 0.55, grid.steps[4], grid, sched),
                       "progressive_target: t is not a grid point with two slots below",
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(progressive_target<double>(flat, z, grid.steps[2], grid.steps[3], grid, sched),
                       "progressive_target: s must sit two grid slots below t", std::invalid_argument);
  // the last grid point with two slots below is steps[size-3]
  CHECK_THROWS_AS(progressive_target<double>(flat, z, grid.steps[grid.steps.size() - 2],
                                             grid.steps[grid.steps.size() - 1], grid, sched),
                  std::invalid_argument);

  TimestepGrid degenerate;
  degenerate.steps = {sched.t_max, 0.6, 0.6 - 1e-13, 0.6 - 2e-13, sched.t_min};
  CHECK_THROWS_WITH_AS(
      progressive_target<double>(flat, z, 0.6, 0.6 - 2e-13, degenerate, sched),
      "progressive_target: equal-SNR step, one-step update is not invertible", std::domain_error);
}

TEST_CASE("step distillation round trains a student and leaves base and teacher alone") {
  auto spec = tiny_spec();
  auto data = tiny_data();
  ParamSet base = train_base(spec, data, default_schedule(), quick_cfg(20, 4));
  GuideSpec gspec = default_guide_spec(GuideVariant::tiny, spec);
  ParamSet teacher = init_guide(gspec, 3);
  const uint64_t base_before = base.value_checksum();
  const uint64_t teacher_before = teacher.value_checksum();

  TrainConfig cfg = quick_cfg(8, 11);
  cfg.batch_size = 8;
  DistillRound round{8, 0};
  ParamSet s1 = progressive_distill_round(spec, base, gspec, teacher, round, data, default_schedule(), cfg);
  CHECK(s1.owner == "guide");
  CHECK(s1.param_count() == teacher.param_count());
  CHECK(s1.value_checksum() != teacher.value_checksum());
  CHECK(base.value_checksum() == base_before);
  CHECK(teacher.value_checksum() == teacher_before);

  ParamSet s2 = progressive_distill_round(spec, base, gspec, teacher, round, data, default_schedule(), cfg);
  CHECK(s1.value_checksum() == s2.value_checksum());

  CHECK_THROWS_AS(progressive_distill_round(spec, base, gspec, teacher, DistillRound{5, 0}, data,
                                            default_schedule(), cfg),
                  std::invalid_argument);
  ParamSet not_guide = teacher;
  not_guide.owner = "base";
  CHECK_THROWS_WITH_AS(progressive_distill_round(spec, base, gspec, not_guide, round, data,
                                                 default_schedule(), cfg),
                       "step distillation requires a teacher owned by \"guide\"",
                       std::invalid_argument);
}
