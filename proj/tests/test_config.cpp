#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "pgdd/config.hpp"

using namespace pgdd;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  return ExperimentConfig::from_json_text(text, "test.cfg");
}

std::string thrown_message(const std::string& text) {
  try {
    parse(text);
  } catch (const std::invalid_argument& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty config resolves to full defaults") {
  ExperimentConfig c = parse("{}");
  CHECK(c.out_dir == "run");
  CHECK(c.seed == 0);
  CHECK(c.dataset.kind == "mixture2d");
  CHECK(c.dataset.num_classes == 2);
  CHECK(c.dataset.shift == "none");
  CHECK(c.base_spec == default_point2d_spec());
  CHECK(c.guide_spec.variant == GuideVariant::tiny);
  CHECK(c.guide_spec.zero_init);
  CHECK(c.guide_spec.base == c.base_spec);
  CHECK(c.train.steps == TrainConfig{}.steps);
  CHECK(c.train.seed == 0);
  CHECK(c.sample.mode == "guided");
  CHECK(c.analyze.guidance == std::vector<double>{2.0, 4.0, 8.0});
  CHECK(c.rounds == std::vector<int>{64, 32, 16});
  CHECK(c.inputs.empty());
}

TEST_CASE("root seed seeds training unless training pins its own") {
  CHECK(parse("{\"seed\": 99}").train.seed == 99);
  CHECK(parse("{\"seed\": 99, \"train\": {\"seed\": 5}}").train.seed == 5);
  CHECK(parse("{\"seed\": 99, \"train\": {\"steps\": 10}}").train.seed == 99);
}

TEST_CASE("base spec inherits the dataset class count unless pinned") {
  CHECK(parse("{\"dataset\": {\"num_classes\": 4}}").base_spec.num_classes == 4);
  ExperimentConfig pinned =
      parse("{\"dataset\": {\"num_classes\": 4}, \"base_spec\": {\"mode\": \"point2d\", \"num_classes\": 3}}");
  CHECK(pinned.base_spec.num_classes == 3);
  ExperimentConfig partial = parse("{\"dataset\": {\"num_classes\": 4}, \"base_spec\": {\"mode\": \"point2d\"}}");
  CHECK(partial.base_spec.num_classes == 4);
}

TEST_CASE("dataset kind selects the backbone family") {
  ExperimentConfig img = parse("{\"dataset\": {\"kind\": \"shapes16\", \"num_classes\": 4, \"n\": 64}}");
  CHECK(img.base_spec.mode == Backbone::image16);
  CHECK(img.base_spec.widths == default_image16_spec().widths);
  CHECK(img.guide_spec.inner_dim == default_guide_spec(GuideVariant::tiny, img.base_spec).inner_dim);

  std::string cross = thrown_message(
      "{\"dataset\": {\"kind\": \"shapes16\"}, \"base_spec\": {\"mode\": \"point2d\"}}");
  CHECK(cross == "test.cfg: shapes16 data needs an image16 backbone");
  std::string cross2 = thrown_message("{\"base_spec\": {\"mode\": \"image16\"}}");
  CHECK(cross2 == "test.cfg: mixture2d data needs a point2d backbone");
}

TEST_CASE("unknown keys fail with the offending line") {
  std::string top = "{\n  \"seed\": 1,\n  \"bogus\": 2\n}\n";
  CHECK(thrown_message(top) == "test.cfg:3: unknown key \"bogus\" in config");

  std::string nested = "{\n  \"dataset\": {\n    \"kind\": \"mixture2d\",\n    \"jitter\": 0.1\n  }\n}\n";
  CHECK(thrown_message(nested) == "test.cfg:4: unknown key \"jitter\" in dataset");

  std::string train = "{\"train\": {\"momentum\": 0.9}}";
  CHECK(thrown_message(train) == "test.cfg:1: unknown key \"momentum\" in train");

  std::string guide = "{\n\n\n  \"guide_spec\": {\"depth\": 3}\n}";
  CHECK(thrown_message(guide) == "test.cfg:4: unknown key \"depth\" in guide_spec");

  std::string inputs = "{\"inputs\": {\"extra\": \"x.pgdd\"}}";
  CHECK(thrown_message(inputs) == "test.cfg:1: unknown key \"extra\" in inputs");
}

TEST_CASE("value errors carry the origin prefix") {
  CHECK(thrown_message("{\"dataset\": {\"kind\": \"weird\"}}").rfind("test.cfg: dataset kind", 0) == 0);
  CHECK(thrown_message("{\"sample\": {\"mode\": \"warp\"}}").rfind("test.cfg: sample mode", 0) == 0);
  CHECK(thrown_message("{\"dataset\": {\"shift\": \"rotate45\", \"kind\": \"shapes16\"}}")
            .rfind("test.cfg: shapes16 shift", 0) == 0);
  CHECK(thrown_message("{\"rounds\": [64, 31]}") ==
        "test.cfg: rounds entries must be even and at least 2");
  CHECK_NOTHROW(parse("{\"rounds\": [64, 32]}"));

  std::string bad_json = thrown_message("{ this is not json");
  CHECK(bad_json.rfind("test.cfg: ", 0) == 0);
  CHECK(bad_json.size() > std::string("test.cfg: ").size());
}

TEST_CASE("resolved config text is a fixed point") {
  ExperimentConfig c = parse(
      "{\"seed\": 17, \"out_dir\": \"runs/x\", \"dataset\": {\"num_classes\": 3},"
      " \"train\": {\"steps\": 123, \"fixed_g\": true},"
      " \"inputs\": {\"dataset\": \"d.pgdd\", \"base_ckpt\": \"b.pgdd\"}}");
  std::string round1 = c.resolved_json();
  ExperimentConfig c2 = ExperimentConfig::from_json_text(round1, "resolved");
  CHECK(c2.resolved_json() == round1);
  CHECK(c2.seed == 17);
  CHECK(c2.train.steps == 123);
  CHECK(c2.train.fixed_g);
  CHECK(c2.base_spec.num_classes == 3);
  CHECK(c2.inputs.at("base_ckpt") == "b.pgdd");
}

TEST_CASE("guide spec may target its own base architecture") {
  ExperimentConfig c = parse(
      "{\"guide_spec\": {\"variant\": \"full\", \"zero_init\": false,"
      " \"base_spec\": {\"mode\": \"point2d\", \"widths\": [8, 8]}}}");
  CHECK(c.guide_spec.variant == GuideVariant::full);
  CHECK_FALSE(c.guide_spec.zero_init);
  CHECK(c.guide_spec.base.widths == std::vector<int>{8, 8});
  CHECK(c.base_spec == default_point2d_spec());  // outer spec untouched
}

TEST_CASE("config mixture honors the declared shift") {
  ExperimentConfig plain = parse("{}");
  MixtureSpec m = plain.mixture();
  CHECK(m.classes[0][0].mean[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(m.classes[0][0].mean[1] == doctest::Approx(0.0).epsilon(1e-12));

  MixtureSpec rot = parse("{\"dataset\": {\"shift\": \"rotate45\"}}").mixture();
  CHECK(rot.classes[0][0].mean[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(rot.classes[0][0].mean[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  MixtureSpec big = parse("{\"dataset\": {\"shift\": \"scale1.5\"}}").mixture();
  CHECK(big.classes[0][0].mean[0] == doctest::Approx(3.0).epsilon(1e-12));

  ExperimentConfig shapes = parse("{\"dataset\": {\"kind\": \"shapes16\", \"num_classes\": 4}}");
  CHECK_THROWS_WITH_AS(shapes.mixture(), "no analytic mixture for dataset kind \"shapes16\"",
                       std::invalid_argument);
}

TEST_CASE("config files load from disk") {
  fs::path dir = fs::temp_directory_path() / "pgdd_test_config";
  fs::create_directories(dir);
  fs::path p = dir / "exp.cfg";
  {
    std::ofstream out(p);
    out << "{\"seed\": 31, \"train\": {\"steps\": 7}}\n";
  }
  ExperimentConfig c = ExperimentConfig::from_file(p.string());
  CHECK(c.seed == 31);
  CHECK(c.train.steps == 7);
  CHECK_THROWS(ExperimentConfig::from_file((dir / "missing.cfg").string()));
}
