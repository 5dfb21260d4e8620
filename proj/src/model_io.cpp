#include "pgdd/model_io.hpp"

#include <stdexcept>

#include <json.hpp>

#include "pgdd/jsonio.hpp"
#include "pgdd/util.hpp"

namespace pgdd {

using nlohmann::json;

namespace {

json common_meta(const char* owner, const NoiseSchedule& sched, uint64_t seed, int64_t step,
                 const std::string& parent_hash) {
  json m;
  m["owner"] = owner;
  m["schedule"] = schedule_to_json(sched);
  m["seed"] = seed;
  m["step"] = step;
  m["parent_hash"] = parent_hash;
  return m;
}

json load_meta(const CheckpointBundle& b, const char* expect_owner, const std::string& path) {
  json m = json::parse(b.metadata_json);
  if (!m.contains("owner") || m["owner"].get<std::string>() != expect_owner)
    throw std::runtime_error(path + ": checkpoint owner tag is \"" +
                             (m.contains("owner") ? m["owner"].get<std::string>() : "") +
                             "\", expected \"" + expect_owner + "\"");
  return m;
}

void check_param_shapes(const ParamSet& got, const ParamSet& want, const std::string& path) {
  if (got.items.size() != want.items.size())
    throw std::runtime_error(path + ": checkpoint tensor count does not match its spec");
  for (size_t i = 0; i < got.items.size(); ++i)
    if (got.items[i].name != want.items[i].name || got.items[i].value.dims != want.items[i].value.dims)
      throw std::runtime_error(path + ": tensor \"" + got.items[i].name +
                               "\" does not match the spec layout");
}

}  // namespace

uint64_t save_base_checkpoint(const BaseCheckpoint& c, const std::string& path) {
  c.spec.validate();
  if (c.params.owner != "base")
    throw std::invalid_argument("save_base_checkpoint: parameter owner must be \"base\"");
  json m = common_meta("base", c.sched, c.seed, c.step, c.parent_hash);
  m["spec"] = denoiser_spec_to_json(c.spec);
  CheckpointBundle b = bundle_params(c.params, m.dump());
  save_checkpoint(b, path);
  return checkpoint_hash(b);
}

BaseCheckpoint load_base_checkpoint(const std::string& path) {
  CheckpointBundle b = load_checkpoint(path);
  json m = load_meta(b, "base", path);
  BaseCheckpoint c;
  c.spec = denoiser_spec_from_json(m.at("spec"));
  c.sched = schedule_from_json(m.at("schedule"));
  c.seed = m.at("seed").get<uint64_t>();
  c.step = m.at("step").get<int64_t>();
  c.parent_hash = m.at("parent_hash").get<std::string>();
  c.params = params_from_bundle(b);
  check_param_shapes(c.params, init_denoiser(c.spec, 0), path);
  return c;
}

uint64_t save_guide_checkpoint(const GuideCheckpoint& c, const std::string& path) {
  c.gspec.validate();
  if (c.params.owner != "guide")
    throw std::invalid_argument("save_guide_checkpoint: parameter owner must be \"guide\"");
  json m = common_meta("guide", c.sched, c.seed, c.step, c.parent_hash);
  m["spec"] = guide_spec_to_json(c.gspec);
  CheckpointBundle b = bundle_params(c.params, m.dump());
  save_checkpoint(b, path);
  return checkpoint_hash(b);
}

GuideCheckpoint load_guide_checkpoint(const std::string& path) {
  CheckpointBundle b = load_checkpoint(path);
  json m = load_meta(b, "guide", path);
  GuideCheckpoint c;
  json spec = m.at("spec");
  DenoiserSpec base = denoiser_spec_from_json(spec.at("base_spec"));
  c.gspec = guide_spec_from_json(spec, base);
  c.sched = schedule_from_json(m.at("schedule"));
  c.seed = m.at("seed").get<uint64_t>();
  c.step = m.at("step").get<int64_t>();
  c.parent_hash = m.at("parent_hash").get<std::string>();
  c.params = params_from_bundle(b);
  check_param_shapes(c.params, init_guide(c.gspec, 0), path);
  return c;
}

PluggedModel plug(const GuideCheckpoint& guide, const BaseCheckpoint& base) {
  auto want = port_shapes(guide.gspec.base, 1);
  auto got = port_shapes(base.spec, 1);
  std::string bad;
  size_t n = std::max(want.size(), got.size());
  for (size_t p = 0; p < n; ++p) {
    std::string w = p < want.size() ? shape_str(want[p]) : "(missing)";
    std::string g = p < got.size() ? shape_str(got[p]) : "(missing)";
    if (w != g) bad += (bad.empty() ? "" : ", ") + std::string("port ") + std::to_string(p) + ": guide " + w + " vs base " + g;
  }
  if (!bad.empty()) throw std::invalid_argument("plug: incompatible injection ports: " + bad);
  if (guide.gspec.base != base.spec)
    throw std::invalid_argument(
        "plug: ports agree but the architectures differ (embedding or class-count mismatch)");
  return PluggedModel{base.spec, base.params, guide.gspec, guide.params};
}

}  // namespace pgdd
