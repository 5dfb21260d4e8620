#pragma once

#include <cstdint>
#include <string>

#include "pgdd/checkpoint.hpp"
#include "pgdd/guide.hpp"
#include "pgdd/network.hpp"
#include "pgdd/schedule.hpp"

namespace pgdd {

// Typed views over CheckpointBundle for the two parameter owners. Metadata
// carries the spec, schedule, root seed, trainer step, and the parent
// bundle's content hash (hex, "" for roots) so lineage is auditable.

struct BaseCheckpoint {
  DenoiserSpec spec;
  NoiseSchedule sched;
  uint64_t seed = 0;
  int64_t step = 0;
  std::string parent_hash;
  ParamSet params;
};

struct GuideCheckpoint {
  GuideSpec gspec;
  NoiseSchedule sched;
  uint64_t seed = 0;
  int64_t step = 0;
  std::string parent_hash;
  ParamSet params;
};

// Savers return the content hash of the written bundle.
uint64_t save_base_checkpoint(const BaseCheckpoint& c, const std::string& path);
BaseCheckpoint load_base_checkpoint(const std::string& path);
uint64_t save_guide_checkpoint(const GuideCheckpoint& c, const std::string& path);
GuideCheckpoint load_guide_checkpoint(const std::string& path);

// A guide paired with a base it may not have been distilled against. Pairing
// is pure validation, zero training steps; a port-shape mismatch is reported
// per port.
struct PluggedModel {
  DenoiserSpec spec;
  ParamSet base;
  GuideSpec gspec;
  ParamSet guide;
};

PluggedModel plug(const GuideCheckpoint& guide, const BaseCheckpoint& base);

}  // namespace pgdd
