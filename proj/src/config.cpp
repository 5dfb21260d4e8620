#include "pgdd/config.hpp"

#include <stdexcept>

#include <json.hpp>

#include "pgdd/dataset.hpp"
#include "pgdd/jsonio.hpp"
#include "pgdd/util.hpp"

namespace pgdd {

using nlohmann::json;

void DatasetConfig::validate() const {
  if (kind != "mixture2d" && kind != "shapes16")
    throw std::invalid_argument("dataset kind must be \"mixture2d\" or \"shapes16\", got \"" + kind +
                                "\"");
  if (num_classes < 1) throw std::invalid_argument("dataset num_classes must be positive");
  if (n < 1) throw std::invalid_argument("dataset n must be positive");
  if (kind == "mixture2d") {
    if (radius <= 0.0 || var <= 0.0)
      throw std::invalid_argument("mixture2d needs positive radius and var");
    if (shift != "none" && shift != "rotate45" && shift != "scale1.5")
      throw std::invalid_argument("mixture2d shift must be none, rotate45, or scale1.5");
  } else {
    if (shift != "none" && shift != "invert")
      throw std::invalid_argument("shapes16 shift must be none or invert");
  }
}

void SampleConfig::validate() const {
  if (num_steps < 1) throw std::invalid_argument("sample num_steps must be positive");
  if (count < 1) throw std::invalid_argument("sample count must be positive");
  if (mode != "conditional" && mode != "cfg" && mode != "guided" && mode != "oracle")
    throw std::invalid_argument("sample mode must be conditional, cfg, guided, or oracle");
}

void AnalyzeConfig::validate() const {
  if (guidance.empty()) throw std::invalid_argument("analyze needs at least one guidance value");
  if (num_steps < 1 || count < 1 || projections < 1)
    throw std::invalid_argument("analyze num_steps, count, projections must be positive");
}

namespace {

DatasetConfig dataset_from_json(const json& j) {
  check_keys(j, {"kind", "num_classes", "radius", "var", "n", "shift"}, "dataset");
  DatasetConfig d;
  if (j.contains("kind")) d.kind = j["kind"].get<std::string>();
  if (j.contains("num_classes")) d.num_classes = j["num_classes"].get<int>();
  if (j.contains("radius")) d.radius = j["radius"].get<double>();
  if (j.contains("var")) d.var = j["var"].get<double>();
  if (j.contains("n")) d.n = j["n"].get<int64_t>();
  if (j.contains("shift")) d.shift = j["shift"].get<std::string>();
  d.validate();
  return d;
}

SampleConfig sample_from_json(const json& j) {
  check_keys(j, {"num_steps", "guidance", "count", "mode"}, "sample");
  SampleConfig s;
  if (j.contains("num_steps")) s.num_steps = j["num_steps"].get<int>();
  if (j.contains("guidance")) s.guidance = j["guidance"].get<double>();
  if (j.contains("count")) s.count = j["count"].get<int>();
  if (j.contains("mode")) s.mode = j["mode"].get<std::string>();
  s.validate();
  return s;
}

AnalyzeConfig analyze_from_json(const json& j) {
  check_keys(j, {"guidance", "num_steps", "count", "projections"}, "analyze");
  AnalyzeConfig a;
  if (j.contains("guidance")) a.guidance = j["guidance"].get<std::vector<double>>();
  if (j.contains("num_steps")) a.num_steps = j["num_steps"].get<int>();
  if (j.contains("count")) a.count = j["count"].get<int>();
  if (j.contains("projections")) a.projections = j["projections"].get<int>();
  a.validate();
  return a;
}

// Best-effort line anchor: first occurrence of the quoted key in the raw
// text. Good enough to point an editor at the problem.
int find_key_line(const std::string& text, const std::string& key) {
  size_t pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  int line = 1;
  for (size_t i = 0; i < pos; ++i)
    if (text[i] == '\n') ++line;
  return line;
}

std::string extract_quoted(const std::string& msg) {
  size_t a = msg.find('"');
  if (a == std::string::npos) return "";
  size_t b = msg.find('"', a + 1);
  if (b == std::string::npos) return "";
  return msg.substr(a + 1, b - a - 1);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text,
                                                  const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports "... at line L, column C ..." for text input.
    throw std::invalid_argument(origin + ": " + e.what());
  }
  try {
    check_keys(j,
               {"out_dir", "seed", "dataset", "schedule", "base_spec", "guide_spec", "train",
                "sample", "analyze", "rounds", "inputs"},
               "config");
    ExperimentConfig c;
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("dataset")) c.dataset = dataset_from_json(j["dataset"]);
    if (j.contains("schedule")) c.schedule = schedule_from_json(j["schedule"]);
    if (j.contains("base_spec")) {
      c.base_spec = denoiser_spec_from_json(j["base_spec"]);
    } else {
      c.base_spec =
          c.dataset.kind == "mixture2d" ? default_point2d_spec() : default_image16_spec();
    }
    c.base_spec.num_classes = j.contains("base_spec") && j["base_spec"].contains("num_classes")
                                  ? c.base_spec.num_classes
                                  : c.dataset.num_classes;
    c.base_spec.validate();
    c.guide_spec = j.contains("guide_spec")
                       ? guide_spec_from_json(j["guide_spec"], c.base_spec)
                       : default_guide_spec(GuideVariant::tiny, c.base_spec);
    TrainConfig tdefaults;
    tdefaults.seed = c.seed;
    c.train = j.contains("train") ? train_config_from_json(j["train"], tdefaults) : tdefaults;
    if (j.contains("sample")) c.sample = sample_from_json(j["sample"]);
    if (j.contains("analyze")) c.analyze = analyze_from_json(j["analyze"]);
    if (j.contains("rounds")) {
      c.rounds = j["rounds"].get<std::vector<int>>();
      for (int r : c.rounds)
        if (r < 2 || r % 2 != 0)
          throw std::invalid_argument("rounds entries must be even and at least 2");
    }
    if (j.contains("inputs")) {
      check_keys(j["inputs"], {"dataset", "base_ckpt", "guide_ckpt"}, "inputs");
      for (const auto& [k, v] : j["inputs"].items())
        c.inputs[k] = v.get<std::string>();
    }
    if (c.dataset.kind == "mixture2d" && c.base_spec.mode != Backbone::point2d)
      throw std::invalid_argument("mixture2d data needs a point2d backbone");
    if (c.dataset.kind == "shapes16" && c.base_spec.mode != Backbone::image16)
      throw std::invalid_argument("shapes16 data needs an image16 backbone");
    return c;
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    if (msg.rfind("unknown key", 0) == 0) {
      int line = find_key_line(text, extract_quoted(msg));
      throw std::invalid_argument(origin + ":" + std::to_string(line) + ": " + msg);
    }
    throw std::invalid_argument(origin + ": " + msg);
  }
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_json_text(read_file(path), path);
}

std::string ExperimentConfig::resolved_json() const {
  json j;
  j["out_dir"] = out_dir;
  j["seed"] = seed;
  j["dataset"] = json{{"kind", dataset.kind},     {"num_classes", dataset.num_classes},
                      {"radius", dataset.radius}, {"var", dataset.var},
                      {"n", dataset.n},           {"shift", dataset.shift}};
  j["schedule"] = schedule_to_json(schedule);
  j["base_spec"] = denoiser_spec_to_json(base_spec);
  j["guide_spec"] = guide_spec_to_json(guide_spec);
  j["train"] = train_config_to_json(train);
  j["sample"] = json{{"num_steps", sample.num_steps},
                     {"guidance", sample.guidance},
                     {"count", sample.count},
                     {"mode", sample.mode}};
  j["analyze"] = json{{"guidance", analyze.guidance},
                      {"num_steps", analyze.num_steps},
                      {"count", analyze.count},
                      {"projections", analyze.projections}};
  j["rounds"] = rounds;
  j["inputs"] = inputs;
  return j.dump(2) + "\n";
}

MixtureSpec ExperimentConfig::mixture() const {
  if (dataset.kind != "mixture2d")
    throw std::invalid_argument("no analytic mixture for dataset kind \"" + dataset.kind + "\"");
  MixtureSpec m = ring_mixture(dataset.num_classes, dataset.radius, dataset.var);
  if (dataset.shift == "rotate45") m = rotate_mixture(m, 45.0);
  if (dataset.shift == "scale1.5") m = scale_mixture(m, 1.5);
  return m;
}

}  // namespace pgdd
