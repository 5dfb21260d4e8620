#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace pgdd {

// Philox4x32-10 counter-based generator. Stateless core: block(counter, key)
// yields four 32-bit words, so any draw is addressable by (key, counter) and
// the draw sequence is independent of threading or evaluation order.
std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key);

// A named draw stream. All randomness in the workbench flows from one root
// seed through streams keyed by (root_seed, stream name, substream index).
// Draws are positional: inserting or reordering draws changes downstream
// results, which the reproducibility tests rely on.
class RandomStream {
 public:
  RandomStream(uint64_t root_seed, const std::string& name, uint64_t substream = 0);

  uint32_t next_u32();
  uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double next_double();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n);
  // Standard normal via Box-Muller; pairs are buffered.
  double normal();

  uint64_t root_seed() const { return root_; }
  const std::string& name() const { return name_; }

 private:
  void refill();

  uint64_t root_;
  std::string name_;
  std::array<uint32_t, 2> key_;
  uint64_t counter_ = 0;
  uint64_t substream_ = 0;
  std::array<uint32_t, 4> block_{};
  int block_pos_ = 4;  // force refill on first draw
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace pgdd
