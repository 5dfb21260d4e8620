#include "pgdd/jsonio.hpp"

#include <stdexcept>

namespace pgdd {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, val] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw std::invalid_argument("unknown key \"" + key + "\" in " + where);
  }
}

json schedule_to_json(const NoiseSchedule& s) {
  return json{{"kind", s.kind == ScheduleKind::cosine ? "cosine" : "linear_snr"},
              {"t_min", s.t_min},
              {"t_max", s.t_max}};
}

NoiseSchedule schedule_from_json(const json& j) {
  check_keys(j, {"kind", "t_min", "t_max"}, "schedule");
  NoiseSchedule s;
  if (j.contains("kind")) {
    std::string k = j["kind"].get<std::string>();
    if (k == "cosine")
      s.kind = ScheduleKind::cosine;
    else if (k == "linear_snr")
      s.kind = ScheduleKind::linear_snr;
    else
      throw std::invalid_argument("schedule kind must be \"cosine\" or \"linear_snr\", got \"" + k +
                                  "\"");
  }
  if (j.contains("t_min")) s.t_min = j["t_min"].get<double>();
  if (j.contains("t_max")) s.t_max = j["t_max"].get<double>();
  s.validate();
  return s;
}

json denoiser_spec_to_json(const DenoiserSpec& s) {
  return json{{"mode", s.mode == Backbone::point2d ? "point2d" : "image16"},
              {"widths", s.widths},
              {"num_classes", s.num_classes},
              {"embed_dim", s.embed_dim}};
}

DenoiserSpec denoiser_spec_from_json(const json& j) {
  check_keys(j, {"mode", "widths", "num_classes", "embed_dim"}, "base_spec");
  DenoiserSpec s;
  if (j.contains("mode")) {
    std::string m = j["mode"].get<std::string>();
    if (m == "point2d")
      s.mode = Backbone::point2d;
    else if (m == "image16")
      s.mode = Backbone::image16;
    else
      throw std::invalid_argument("backbone mode must be \"point2d\" or \"image16\", got \"" + m +
                                  "\"");
    // Unspecified fields follow the defaults for the chosen backbone.
    DenoiserSpec d = s.mode == Backbone::point2d ? default_point2d_spec() : default_image16_spec();
    s = d;
  }
  if (j.contains("widths")) s.widths = j["widths"].get<std::vector<int>>();
  if (j.contains("num_classes")) s.num_classes = j["num_classes"].get<int>();
  if (j.contains("embed_dim")) s.embed_dim = j["embed_dim"].get<int>();
  s.num_ports = static_cast<int>(s.widths.size());
  s.validate();
  return s;
}

json guide_spec_to_json(const GuideSpec& g) {
  return json{{"variant", g.variant == GuideVariant::full ? "full" : "tiny"},
              {"zero_init", g.zero_init},
              {"inner_dim", g.inner_dim},
              {"base_spec", denoiser_spec_to_json(g.base)}};
}

GuideSpec guide_spec_from_json(const json& j, const DenoiserSpec& base) {
  check_keys(j, {"variant", "zero_init", "inner_dim", "base_spec"}, "guide_spec");
  GuideVariant var = GuideVariant::tiny;
  if (j.contains("variant")) {
    std::string v = j["variant"].get<std::string>();
    if (v == "full")
      var = GuideVariant::full;
    else if (v == "tiny")
      var = GuideVariant::tiny;
    else
      throw std::invalid_argument("guide variant must be \"full\" or \"tiny\", got \"" + v + "\"");
  }
  DenoiserSpec b = j.contains("base_spec") ? denoiser_spec_from_json(j["base_spec"]) : base;
  GuideSpec g = default_guide_spec(var, b);
  if (j.contains("zero_init")) g.zero_init = j["zero_init"].get<bool>();
  if (j.contains("inner_dim")) g.inner_dim = j["inner_dim"].get<int>();
  g.validate();
  return g;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"steps", c.steps},
              {"learning_rate", c.learning_rate},
              {"seed", c.seed},
              {"weighting",
               c.weighting == LossWeighting::constant_one ? "constant_one" : "truncated_snr"},
              {"g_lo", c.g_lo},
              {"g_hi", c.g_hi},
              {"fixed_g", c.fixed_g},
              {"g_value", c.g_value},
              {"cond_dropout_prob", c.cond_dropout_prob},
              {"log_every", c.log_every}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  check_keys(j,
             {"batch_size", "steps", "learning_rate", "seed", "weighting", "g_lo", "g_hi", "fixed_g",
              "g_value", "cond_dropout_prob", "log_every"},
             "train");
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("steps")) c.steps = j["steps"].get<int>();
  if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  if (j.contains("weighting")) {
    std::string w = j["weighting"].get<std::string>();
    if (w == "constant_one")
      c.weighting = LossWeighting::constant_one;
    else if (w == "truncated_snr")
      c.weighting = LossWeighting::truncated_snr;
    else
      throw std::invalid_argument("weighting must be \"constant_one\" or \"truncated_snr\", got \"" +
                                  w + "\"");
  }
  if (j.contains("g_lo")) c.g_lo = j["g_lo"].get<double>();
  if (j.contains("g_hi")) c.g_hi = j["g_hi"].get<double>();
  if (j.contains("fixed_g")) c.fixed_g = j["fixed_g"].get<bool>();
  if (j.contains("g_value")) c.g_value = j["g_value"].get<double>();
  if (j.contains("cond_dropout_prob")) c.cond_dropout_prob = j["cond_dropout_prob"].get<double>();
  if (j.contains("log_every")) c.log_every = j["log_every"].get<int>();
  c.validate();
  return c;
}

json mixture_to_json(const MixtureSpec& m) {
  json classes = json::array();
  for (const auto& cls : m.classes) {
    json comps = json::array();
    for (const auto& comp : cls)
      comps.push_back(json{{"weight", comp.weight}, {"mean", comp.mean}, {"var", comp.var}});
    classes.push_back(comps);
  }
  return json{{"classes", classes}};
}

MixtureSpec mixture_from_json(const json& j) {
  check_keys(j, {"classes"}, "mixture");
  MixtureSpec m;
  for (const auto& cls : j.at("classes")) {
    std::vector<MixtureComponent> comps;
    for (const auto& comp : cls) {
      check_keys(comp, {"weight", "mean", "var"}, "mixture component");
      MixtureComponent c;
      c.weight = comp.at("weight").get<double>();
      c.mean = comp.at("mean").get<std::vector<double>>();
      c.var = comp.at("var").get<std::vector<double>>();
      comps.push_back(std::move(c));
    }
    m.classes.push_back(std::move(comps));
  }
  m.validate();
  return m;
}

}  // namespace pgdd
