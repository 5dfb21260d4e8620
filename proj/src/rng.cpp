#include "pgdd/rng.hpp"

#include <cmath>

#include "pgdd/util.hpp"

namespace pgdd {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo32(uint32_t a, uint32_t b, uint32_t* hi, uint32_t* lo) {
  uint64_t p = static_cast<uint64_t>(a) * static_cast<uint64_t>(b);
  *hi = static_cast<uint32_t>(p >> 32);
  *lo = static_cast<uint32_t>(p);
}

inline std::array<uint32_t, 4> philox_round(std::array<uint32_t, 4> c, std::array<uint32_t, 2> k) {
  uint32_t hi0, lo0, hi1, lo1;
  mulhilo32(kPhiloxM0, c[0], &hi0, &lo0);
  mulhilo32(kPhiloxM1, c[2], &hi1, &lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace

std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr, std::array<uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    ctr = philox_round(ctr, key);
  }
  return ctr;
}

RandomStream::RandomStream(uint64_t root_seed, const std::string& name, uint64_t substream)
    : root_(root_seed), name_(name), substream_(substream) {
  // Key mixes the root seed with the stream name so streams are independent
  // even when substream indices collide.
  uint64_t h = fnv1a64(name.data(), name.size());
  uint64_t mixed = h ^ (root_seed * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull);
  key_ = {static_cast<uint32_t>(mixed), static_cast<uint32_t>(mixed >> 32)};
}

void RandomStream::refill() {
  std::array<uint32_t, 4> ctr = {
      static_cast<uint32_t>(counter_),
      static_cast<uint32_t>(counter_ >> 32),
      static_cast<uint32_t>(substream_),
      static_cast<uint32_t>(substream_ >> 32),
  };
  block_ = philox4x32(ctr, key_);
  ++counter_;
  block_pos_ = 0;
}

uint32_t RandomStream::next_u32() {
  if (block_pos_ >= 4) refill();
  return block_[block_pos_++];
}

uint64_t RandomStream::next_u64() {
  uint64_t lo = next_u32();
  uint64_t hi = next_u32();
  return (hi << 32) | lo;
}

double RandomStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

uint64_t RandomStream::uniform_index(uint64_t n) {
  // Rejection-free modulo is fine here: n is tiny relative to 2^64 in every
  // call site (dataset sizes, class counts), bias < 2^-40.
  return n == 0 ? 0 : next_u64() % n;
}

double RandomStream::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  // (0,1] for u1 so log never sees zero.
  double u1 = (static_cast<double>(next_u32()) + 1.0) * 0x1.0p-32;
  double u2 = (static_cast<double>(next_u32()) + 0.5) * 0x1.0p-32;
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 6.283185307179586476925286766559 * u2;
  spare_normal_ = r * std::sin(a);
  has_spare_normal_ = true;
  return r * std::cos(a);
}

}  // namespace pgdd
