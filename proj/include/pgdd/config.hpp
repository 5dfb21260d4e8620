#pragma once

#include <map>
#include <string>
#include <vector>

#include "pgdd/distill.hpp"
#include "pgdd/guide.hpp"
#include "pgdd/network.hpp"
#include "pgdd/oracle.hpp"
#include "pgdd/schedule.hpp"

namespace pgdd {

struct DatasetConfig {
  std::string kind = "mixture2d";  // mixture2d | shapes16
  int num_classes = 2;
  double radius = 2.0;             // mixture ring radius
  double var = 0.05;               // mixture component variance
  int64_t n = 4096;
  std::string shift = "none";      // none | rotate45 | scale1.5 | invert

  void validate() const;
};

struct SampleConfig {
  int num_steps = 64;
  double guidance = 4.0;
  int count = 256;
  std::string mode = "guided";  // conditional | cfg | guided | oracle

  void validate() const;
};

struct AnalyzeConfig {
  std::vector<double> guidance = {2.0, 4.0, 8.0};
  int num_steps = 64;
  int count = 256;
  int projections = 64;

  void validate() const;
};

// One declarative file drives every subcommand; each reads the sections it
// needs. Parsing is strict: unknown keys fail with the offending line.
struct ExperimentConfig {
  std::string out_dir = "run";
  uint64_t seed = 0;
  DatasetConfig dataset;
  NoiseSchedule schedule;
  DenoiserSpec base_spec;
  GuideSpec guide_spec;
  TrainConfig train;
  SampleConfig sample;
  AnalyzeConfig analyze;
  std::vector<int> rounds = {64, 32, 16};
  std::map<std::string, std::string> inputs;  // dataset | base_ckpt | guide_ckpt

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text, const std::string& origin);

  // Every default materialized; echoed into the run directory.
  std::string resolved_json() const;

  // The data model implied by the dataset section (mixture kinds only).
  MixtureSpec mixture() const;
};

}  // namespace pgdd
