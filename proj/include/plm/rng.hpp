#pragma once

#include <cstdint>
#include <vector>

namespace plm {

// Deterministic PRNG used everywhere randomness is needed.  We do not use
// <random> distributions because their output is implementation-defined;
// fixed-seed runs must produce identical bytes on any toolchain.
//
// Core generator is splitmix64 (Steele et al.), which is plenty for
// initialization, shuffling and sampling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform index in [0, n). n must be > 0.
  std::size_t index(std::size_t n) {
    // Rejection-free multiply-shift; bias is negligible for n << 2^64 and,
    // more importantly, the result is platform-stable.
    return static_cast<std::size_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Fisher-Yates shuffle, stable across platforms.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent stream, e.g. one per sweep row.
  Rng fork(std::uint64_t salt) {
    Rng r(state_ ^ (0xd6e8feb86659fd93ULL * (salt + 1)));
    r.next_u64();
    return r;
  }

 private:
  std::uint64_t state_;
};

// 64-bit FNV-1a, used for vocabulary fingerprints and config hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace plm
