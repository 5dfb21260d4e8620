// pgdd: one binary, eight subcommands, one declarative config. Every run
// writes its resolved config, version, and metrics into --out so the
// directory alone documents how to reproduce it.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pgdd/analysis.hpp"
#include "pgdd/checkpoint.hpp"
#include "pgdd/config.hpp"
#include "pgdd/dataset.hpp"
#include "pgdd/distill.hpp"
#include "pgdd/model_io.hpp"
#include "pgdd/oracle.hpp"
#include "pgdd/sampler.hpp"
#include "pgdd/schedule.hpp"
#include "pgdd/util.hpp"

namespace {

using namespace pgdd;
using nlohmann::json;

constexpr const char* kVersion = "pgdd 0.1.0";

struct CliArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed;
  std::optional<int> steps;
  std::optional<double> guidance;
  std::string mode;
};

// --steps means "training steps" for trainers and "sampler steps" for
// sample/analyze; the other overrides are global.
enum class StepsTarget { none, train, sample, analyze };

ExperimentConfig load_config(const CliArgs& a, StepsTarget st) {
  ExperimentConfig cfg = ExperimentConfig::from_file(a.config_path);
  if (a.seed) {
    cfg.seed = *a.seed;
    cfg.train.seed = *a.seed;
  }
  if (!a.out_dir.empty()) cfg.out_dir = a.out_dir;
  if (a.steps) {
    if (st == StepsTarget::train) cfg.train.steps = *a.steps;
    if (st == StepsTarget::sample) cfg.sample.num_steps = *a.steps;
    if (st == StepsTarget::analyze) cfg.analyze.num_steps = *a.steps;
  }
  if (a.guidance) cfg.sample.guidance = *a.guidance;
  if (!a.mode.empty()) cfg.sample.mode = a.mode;
  cfg.sample.validate();
  return cfg;
}

void start_run(const ExperimentConfig& cfg) {
  ensure_dir(cfg.out_dir);
  atomic_write_file(cfg.out_dir + "/config.resolved.json", cfg.resolved_json());
  atomic_write_file(cfg.out_dir + "/version.txt", std::string(kVersion) + "\n");
}

std::string need_input(const ExperimentConfig& cfg, const std::string& key,
                       const std::string& cmd) {
  auto it = cfg.inputs.find(key);
  if (it == cfg.inputs.end() || it->second.empty())
    throw std::invalid_argument(cmd + " needs inputs." + key + " in the config");
  return it->second;
}

std::vector<int> round_robin_labels(int count, int num_classes) {
  std::vector<int> c(count);
  for (int i = 0; i < count; ++i) c[i] = i % num_classes;
  return c;
}

std::string g_tag(double g) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", g);
  return buf;
}

int cmd_gen_data(const CliArgs& a) {
  ExperimentConfig cfg = load_config(a, StepsTarget::none);
  start_run(cfg);
  Dataset d;
  if (cfg.dataset.kind == "mixture2d") {
    d = sample_mixture(cfg.mixture(), cfg.dataset.n, cfg.seed);
  } else {
    d = make_shapes16(cfg.dataset.num_classes, cfg.dataset.n, cfg.seed);
    if (cfg.dataset.shift == "invert") d = invert_polarity(d);
  }
  const std::string path = cfg.out_dir + "/dataset.pgdd";
  save_dataset(d, path);
  std::printf("wrote %s (%lld samples, %d classes)\n", path.c_str(),
              static_cast<long long>(d.size()), d.num_classes);
  return 0;
}

int cmd_train_base(const CliArgs& a) {
  ExperimentConfig cfg = load_config(a, StepsTarget::train);
  start_run(cfg);
  Dataset d = load_dataset(need_input(cfg, "dataset", "train-base"));
  MetricsLog log(cfg.out_dir);
  BaseCheckpoint bc;
  bc.spec = cfg.base_spec;
  bc.sched = cfg.schedule;
  bc.seed = cfg.seed;
  bc.step = cfg.train.steps;
  bc.params = train_base(cfg.base_spec, d, cfg.schedule, cfg.train, &log);
  log.close();
  const std::string path = cfg.out_dir + "/base.pgdd";
  uint64_t h = save_base_checkpoint(bc, path);
  std::printf("wrote %s (hash %s, %lld params)\n", path.c_str(), to_hex(h).c_str(),
              static_cast<long long>(bc.params.param_count()));
  return 0;
}

int cmd_distill_cfg(const CliArgs& a) {
  ExperimentConfig cfg = load_config(a, StepsTarget::train);
  start_run(cfg);
  const std::string base_path = need_input(cfg, "base_ckpt", "distill-cfg");
  BaseCheckpoint bc = load_base_checkpoint(base_path);
  if (!(bc.sched == cfg.schedule))
    throw std::invalid_argument(
        "config schedule differs from the base checkpoint's; distillation must use the "
        "teacher's schedule");
  // The checkpoint's architecture wins; the guide is rebuilt over it.
  GuideSpec gspec = cfg.guide_spec;
  gspec.base = bc.spec;
  gspec.validate();
  Dataset d = load_dataset(need_input(cfg, "dataset", "distill-cfg"));
  MetricsLog log(cfg.out_dir);
  GuideCheckpoint gc;
  gc.gspec = gspec;
  gc.sched = cfg.schedule;
  gc.seed = cfg.seed;
  gc.step = cfg.train.steps;
  gc.parent_hash = to_hex(checkpoint_file_hash(base_path));
  gc.params = distill_cfg(bc.spec, bc.params, gspec, d, cfg.schedule, cfg.train, &log);
  log.close();
  const std::string path = cfg.out_dir + "/guide.pgdd";
  uint64_t h = save_guide_checkpoint(gc, path);
  std::printf("wrote %s (hash %s, %lld params)\n", path.c_str(), to_hex(h).c_str(),
              static_cast<long long>(gc.params.param_count()));
  return 0;
}

int cmd_distill_steps(const CliArgs& a) {
  ExperimentConfig cfg = load_config(a, StepsTarget::train);
  start_run(cfg);
  const std::string base_path = need_input(cfg, "base_ckpt", "distill-steps");
  const std::string guide_path = need_input(cfg, "guide_ckpt", "distill-steps");
  BaseCheckpoint bc = load_base_checkpoint(base_path);
  GuideCheckpoint gc = load_guide_checkpoint(guide_path);
  PluggedModel pm = plug(gc, bc);  // validates port compatibility up front
  if (!(bc.sched == cfg.schedule))
    throw std::invalid_argument(
        "config schedule differs from the base checkpoint's; distillation must use the "
        "teacher's schedule");
  if (cfg.rounds.empty()) throw std::invalid_argument("distill-steps needs a nonempty rounds list");
  for (size_t i = 0; i + 1 < cfg.rounds.size(); ++i)
    if (cfg.rounds[i + 1] * 2 != cfg.rounds[i])
      throw std::invalid_argument(
          "rounds must halve: each entry is the next round's teacher step count");
  Dataset d = load_dataset(need_input(cfg, "dataset", "distill-steps"));
  MetricsLog log(cfg.out_dir);
  ParamSet teacher = pm.guide;
  std::string parent = to_hex(checkpoint_file_hash(guide_path));
  for (size_t i = 0; i < cfg.rounds.size(); ++i) {
    DistillRound round;
    round.teacher_steps = cfg.rounds[i];
    round.round_index = static_cast<int>(i);
    ParamSet student = progressive_distill_round(pm.spec, pm.base, pm.gspec, teacher, round, d,
                                                 cfg.schedule, cfg.train, &log);
    GuideCheckpoint out;
    out.gspec = pm.gspec;
    out.sched = cfg.schedule;
    out.seed = cfg.seed;
    out.step = cfg.train.steps;
    out.parent_hash = parent;
    out.params = student;
    const std::string path =
        cfg.out_dir + "/guide_step" + std::to_string(round.student_steps()) + ".pgdd";
    uint64_t h = save_guide_checkpoint(out, path);
    std::printf("wrote %s (hash %s)\n", path.c_str(), to_hex(h).c_str());
    parent = to_hex(h);
    teacher = std::move(student);
  }
  log.close();
  return 0;
}

int cmd_finetune_base(const CliArgs& a) {
  ExperimentConfig cfg = load_config(a, StepsTarget::train);
  start_run(cfg);
  const std::string base_path = need_input(cfg, "base_ckpt", "finetune-base");
  BaseCheckpoint bc = load_base_checkpoint(base_path);
  Dataset d = load_dataset(need_input(cfg, "dataset", "finetune-base"));
  MetricsLog log(cfg.out_dir);
  BaseCheckpoint out;
  out.spec = bc.spec;
  out.sched = cfg.schedule;
  out.seed = cfg.seed;
  out.step = bc.step + cfg.train.steps;
  out.parent_hash = to_hex(checkpoint_file_hash(base_path));
  out.params = finetune_base(bc.spec, bc.params, d, cfg.schedule, cfg.train, &log);
  log.close();
  const std::string path = cfg.out_dir + "/base_ft.pgdd";
  uint64_t h = save_base_checkpoint(out, path);
  std::printf("wrote %s (hash %s)\n", path.c_str(), to_hex(h).c_str());
  return 0;
}

int cmd_sample(const CliArgs& a) {
  ExperimentConfig cfg = load_config(a, StepsTarget::sample);
  start_run(cfg);
  TimestepGrid grid = timestep_grid(cfg.schedule, cfg.sample.num_steps);
  const double g = cfg.sample.guidance;
  SampleTrace trace;
  int num_classes = cfg.dataset.num_classes;
  if (cfg.sample.mode == "oracle") {
    std::vector<int> c = round_robin_labels(cfg.sample.count, num_classes);
    trace = oracle_sample(cfg.mixture(), cfg.schedule, grid, c, g, cfg.seed);
    Dataset out{trace.final_sample(), c, num_classes};
    save_dataset(out, cfg.out_dir + "/samples.pgdd");
  } else {
    BaseCheckpoint bc = load_base_checkpoint(need_input(cfg, "base_ckpt", "sample"));
    num_classes = bc.spec.num_classes;
    std::vector<int> c = round_robin_labels(cfg.sample.count, num_classes);
    if (cfg.sample.mode == "conditional") {
      trace = sample_conditional(bc.spec, bc.params, bc.sched, grid, c, cfg.seed);
    } else if (cfg.sample.mode == "cfg") {
      trace = sample_cfg(bc.spec, bc.params, bc.sched, grid, c, g, cfg.seed);
    } else {
      GuideCheckpoint gc = load_guide_checkpoint(need_input(cfg, "guide_ckpt", "sample"));
      PluggedModel pm = plug(gc, bc);
      trace = sample_guided(pm.spec, pm.base, pm.gspec, pm.guide, bc.sched, grid, c, g, cfg.seed);
    }
    Dataset out{trace.final_sample(), c, num_classes};
    save_dataset(out, cfg.out_dir + "/samples.pgdd");
  }
  export_trace(trace, cfg.out_dir + "/trace.jsonl");
  std::printf("wrote %s/samples.pgdd and trace.jsonl (%d samples, %d steps, mode %s)\n",
              cfg.out_dir.c_str(), cfg.sample.count, grid.num_steps(), cfg.sample.mode.c_str());
  return 0;
}

int cmd_analyze(const CliArgs& a) {
  ExperimentConfig cfg = load_config(a, StepsTarget::analyze);
  start_run(cfg);
  BaseCheckpoint bc = load_base_checkpoint(need_input(cfg, "base_ckpt", "analyze"));
  GuideCheckpoint gc = load_guide_checkpoint(need_input(cfg, "guide_ckpt", "analyze"));
  PluggedModel pm = plug(gc, bc);
  Dataset d = load_dataset(need_input(cfg, "dataset", "analyze"));
  ProbeClassifier probe = train_probe(d);
  TimestepGrid grid = timestep_grid(cfg.schedule, cfg.analyze.num_steps);
  std::vector<int> c = round_robin_labels(cfg.analyze.count, pm.spec.num_classes);
  MetricsLog log(cfg.out_dir);
  write_cost_csv(count_cost(pm.spec, pm.gspec), cfg.out_dir + "/cost.csv");
  for (double g : cfg.analyze.guidance) {
    SampleTrace trace =
        sample_guided(pm.spec, pm.base, pm.gspec, pm.guide, bc.sched, grid, c, g, cfg.seed);
    InjectionHeatmap h = injection_stats(trace, g);
    const std::string tag = g_tag(g);
    write_heatmap_csv(h, cfg.out_dir + "/heatmap_g" + tag + ".csv");
    write_heatmap_svg(h, cfg.out_dir + "/heatmap_g" + tag + ".svg");
    double align = class_alignment(probe, trace.final_sample(), c);
    double sw = sliced_wasserstein(trace.final_sample(), d.x, cfg.analyze.projections, cfg.seed);
    json line;
    line["phase"] = "analyze";
    line["g"] = g;
    line["alignment"] = align;
    line["sliced_w"] = sw;
    line["port_time_mean"] = h.time_mean();
    log.record(line.dump());
    std::printf("g=%s: alignment %.4f, sliced-W %.5f\n", tag.c_str(), align, sw);
  }
  log.close();
  return 0;
}

int cmd_report(const CliArgs& a) {
  ExperimentConfig cfg = load_config(a, StepsTarget::none);
  start_run(cfg);
  CostReport r = count_cost(cfg.base_spec, cfg.guide_spec);
  write_cost_csv(r, cfg.out_dir + "/cost.csv");
  std::printf("base params        %lld\n", static_cast<long long>(r.base_params));
  std::printf("guide params       %lld\n", static_cast<long long>(r.guide_params));
  std::printf("param ratio        %.6f\n", r.param_ratio());
  std::printf("base pass GFLOPs   %.6f\n", r.base_pass_flops * 1e-9);
  std::printf("guide pass GFLOPs  %.6f\n", r.guide_pass_flops * 1e-9);
  std::printf("student/CFG FLOPs  %.6f\n", r.flop_ratio());
  json manifest;
  manifest["version"] = kVersion;
  json arts = json::object();
  for (const auto& [key, path] : cfg.inputs) {
    if (!std::filesystem::exists(path)) continue;
    arts[key] = json{{"path", path}, {"hash", to_hex(checkpoint_file_hash(path))}};
  }
  std::vector<std::string> local;
  if (std::filesystem::is_directory(cfg.out_dir))
    for (const auto& e : std::filesystem::directory_iterator(cfg.out_dir))
      if (e.path().extension() == ".pgdd") local.push_back(e.path().filename().string());
  std::sort(local.begin(), local.end());
  for (const auto& name : local)
    arts[name] = json{{"path", cfg.out_dir + "/" + name},
                      {"hash", to_hex(checkpoint_file_hash(cfg.out_dir + "/" + name))}};
  manifest["artifacts"] = arts;
  atomic_write_file(cfg.out_dir + "/manifest.json", manifest.dump(2) + "\n");
  std::printf("wrote %s/cost.csv and manifest.json\n", cfg.out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "pgdd: guidance-distillation workbench. PGDD_THREADS caps worker "
      "parallelism; PGDD_SIMD=scalar forces the reference kernels."};
  app.require_subcommand(1);

  CliArgs args;
  int rc = 0;
  auto add_common = [&](CLI::App* sub, int (*fn)(const CliArgs&)) {
    sub->add_option("--config", args.config_path, "experiment config file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", args.seed, "override root seed (and train seed)");
    sub->add_option("--out", args.out_dir, "override output directory");
    sub->add_option("--steps", args.steps, "override step count (training or sampler steps)");
    sub->add_option("--guidance", args.guidance, "override sampling guidance strength");
    sub->add_option("--mode", args.mode, "sampling mode")
        ->check(CLI::IsMember({"conditional", "cfg", "guided", "oracle"}));
    sub->callback([&args, &rc, fn]() { rc = fn(args); });
  };

  add_common(app.add_subcommand("gen-data", "generate a labeled dataset"), cmd_gen_data);
  add_common(app.add_subcommand("train-base", "train the base denoiser"), cmd_train_base);
  add_common(app.add_subcommand("distill-cfg", "distill two-pass guidance into a guide"),
             cmd_distill_cfg);
  add_common(app.add_subcommand("distill-steps", "halve sampler steps by progressive rounds"),
             cmd_distill_steps);
  add_common(app.add_subcommand("finetune-base", "continue base training on shifted data"),
             cmd_finetune_base);
  add_common(app.add_subcommand("sample", "run the DDIM sampler"), cmd_sample);
  add_common(app.add_subcommand("analyze", "injection heatmaps and sample metrics"), cmd_analyze);
  add_common(app.add_subcommand("report", "cost table and artifact manifest"), cmd_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
