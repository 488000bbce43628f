#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "mof/error.hpp"

namespace mof {

/// splitmix64 finalizer; decorrelates nearby integer seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Independent stream seed for (root seed, stream id), e.g. one per video.
inline uint64_t substream(uint64_t seed, uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632BE59BD9B4E019ull));
}

/// Deterministic RNG. The engine's bit stream is pinned by the standard and
/// all value mappings are written out here, so results are identical across
/// compilers and platforms (std::uniform_int_distribution is not).
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  /// Unbiased integer in [0, n) via rejection.
  uint64_t below(uint64_t n) {
    if (n == 0) throw ValueError("rng: below(0)");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Integer in [lo, hi).
  int64_t range(int64_t lo, int64_t hi) {
    if (lo >= hi) throw ValueError("rng: empty range");
    return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo)));
  }

  /// Double in [0,1) from the top 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// k distinct values from [0, n), ascending.
  std::vector<int64_t> sample_without_replacement(int64_t k, int64_t n) {
    if (k < 0 || k > n) throw ValueError("rng: sample of " + std::to_string(k) + " from " +
                                         std::to_string(n));
    std::vector<int64_t> pool(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    for (int64_t i = 0; i < k; ++i) {
      int64_t j = i + static_cast<int64_t>(below(static_cast<uint64_t>(n - i)));
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  /// Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace mof
