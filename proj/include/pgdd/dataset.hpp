#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgdd/oracle.hpp"
#include "pgdd/tensor.hpp"

namespace pgdd {

// Labeled training set. x is [N,2] for mixture draws or [N,1,16,16] for the
// shape corpus; labels are class ids in [0, num_classes).
struct Dataset {
  TensorF x;
  std::vector<int> labels;
  int num_classes = 0;

  int64_t size() const { return x.dims.empty() ? 0 : x.dims[0]; }
  void validate() const;
};

// Balanced round-robin class assignment, component choice by weight, then a
// diagonal Gaussian draw. Pure function of (mix, n, seed) via the "data"
// stream.
Dataset sample_mixture(const MixtureSpec& mix, int64_t n, uint64_t seed);

// 16x16 grayscale primitives (disk, box outline, cross, stripes) on a -0.5
// background, one primitive kind per class, with center jitter, amplitude
// jitter, and mild pixel noise.
Dataset make_shapes16(int num_classes, int64_t n, uint64_t seed);

// Domain shifts standing in for downstream fine-tune corpora.
MixtureSpec rotate_mixture(const MixtureSpec& mix, double degrees);
MixtureSpec scale_mixture(const MixtureSpec& mix, double factor);
Dataset invert_polarity(const Dataset& d);

// Datasets persist in the same named-tensor container as checkpoints:
// tensors "x" and "labels" (labels stored as f32), num_classes in metadata.
void save_dataset(const Dataset& d, const std::string& path, const std::string& extra_meta_json = "");
Dataset load_dataset(const std::string& path);

}  // namespace pgdd
