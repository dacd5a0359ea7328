#pragma once

#include <cstdint>
#include <random>

namespace vitl {

// Deterministic random source. std::mt19937_64 has a fully specified output
// sequence, and all mappings below avoid the implementation-defined
// std::*_distribution classes, so the same seed yields the same draws on
// every platform.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n); multiply-shift mapping (n == 0 is a bug).
  size_t uniform_index(size_t n) {
    return static_cast<size_t>((static_cast<__uint128_t>(eng_()) * n) >> 64);
  }

  // Fisher-Yates over [first, last).
  template <class It>
  void shuffle(It first, It last) {
    const size_t n = static_cast<size_t>(last - first);
    for (size_t i = n; i > 1; --i) {
      size_t j = uniform_index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

// Derives independent sub-stream seeds from one run seed (splitmix64 step),
// so e.g. data generation and weight init do not share a draw sequence.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Fixed stream ids used across the pipeline.
enum class RngStream : uint64_t {
  kData = 1,    // synthetic dataset generation
  kSplit = 2,   // dataset shuffling for the split
  kInit = 3,    // weight initialization
  kTrain = 4,   // epoch shuffles and dropout masks
};

inline SeededRng make_stream_rng(uint64_t seed, RngStream s) {
  return SeededRng(derive_seed(seed, static_cast<uint64_t>(s)));
}

}  // namespace vitl
