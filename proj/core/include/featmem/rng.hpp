#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "featmem/error.hpp"

namespace featmem {

/// Derives an independent child seed from (seed, stream). SplitMix64 finalizer
/// over the combined value, so distinct streams give unrelated sequences.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Deterministic random source. Built on std::mt19937_64, whose output
/// sequence is fully specified by the standard, with all distribution
/// transforms implemented here so draws are identical across platforms
/// and standard libraries. Single-owner: never share one instance
/// between threads.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; one spare kept between calls.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Unbiased uniform integer in [0, bound) via rejection sampling.
  std::uint64_t next_index(std::uint64_t bound) {
    if (bound == 0) throw Error("next_index: bound must be positive");
    std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  /// In-place Fisher-Yates, iterating from the back: for i = n-1 .. 1,
  /// swap v[i] with v[next_index(i + 1)].
  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i >= 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_index(i + 1));
      std::swap(v[i], v[j]);
    }
  }

  /// Child generator with a seed derived from (seed, stream).
  SeededRng fork(std::uint64_t stream) const { return SeededRng(derive_seed(seed_, stream)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Uniform sample of k distinct indices from [0, n), without replacement.
/// Partial Fisher-Yates from the front: for i = 0 .. k-1, swap idx[i] with
/// idx[i + next_index(n - i)]; the first k entries are the sample, in the
/// order produced. Returns all of [0, n) when k >= n.
inline std::vector<std::size_t> sample_indices(SeededRng& rng, std::size_t n, std::size_t k) {
  if (k > n) k = n;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.next_index(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace featmem
