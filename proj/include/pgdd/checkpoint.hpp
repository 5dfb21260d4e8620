#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgdd/network.hpp"
#include "pgdd/tensor.hpp"

namespace pgdd {

constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  TensorF value;
};

// On-disk container: "PGDD" magic, u32 format version, a UTF-8 JSON metadata
// block (schedule, spec, seed, trainer step, owner tag, parent hash), then a
// named tensor table. Dtype code 0 is little-endian float32; nothing else is
// defined, so any other code is a load error. serialize/deserialize round-trip
// bitwise, which is what checkpoint hashes and lineage chains rely on.
struct CheckpointBundle {
  std::string metadata_json;
  std::vector<NamedTensor> tensors;

  std::string serialize() const;
  static CheckpointBundle deserialize(const std::string& bytes);

  bool has(const std::string& name) const;
  const TensorF& tensor(const std::string& name) const;
};

void save_checkpoint(const CheckpointBundle& b, const std::string& path);
CheckpointBundle load_checkpoint(const std::string& path);

// Content hash of the serialized bytes. Stored as hex in children's
// "parent_hash" metadata to chain distillation lineage.
uint64_t checkpoint_hash(const CheckpointBundle& b);
uint64_t checkpoint_file_hash(const std::string& path);

// Parameter sets store one tensor per entry, in creation order (the canonical
// order), so bundle -> params -> bundle is identity.
CheckpointBundle bundle_params(const ParamSet& params, const std::string& metadata_json);
ParamSet params_from_bundle(const CheckpointBundle& b);

}  // namespace pgdd
