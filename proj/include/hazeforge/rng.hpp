#pragma once

#include <cstdint>
#include <vector>

namespace hazeforge {

// SplitMix64 (Steele, Lea & Flood, "Fast splittable pseudorandom number
// generators"). One fixed generator for the whole repo: every stream is a
// pure function of its 64-bit seed, independent of the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n). Modulo bias is < 2^-32 for desk-scale n.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// SplitMix64 finalizer, usable as a standalone 64-bit mixer.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derives the seed of an independent stream from a base seed and a stream
// tag. Nested calls give hierarchical streams (experiment -> stage -> item).
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
  return mix64(base + 0x9e3779b97f4a7c15ull * (stream + 1));
}

}  // namespace hazeforge
