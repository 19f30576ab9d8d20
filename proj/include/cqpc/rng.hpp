#pragma once

// Counter-based deterministic random streams.
//
// Every draw is a pure function of (seed, stream_id, counter), so sequences
// are identical across platforms and replications can be generated in any
// order. Output mixing uses the SplitMix64 finalizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "cqpc/normal.hpp"

namespace cqpc {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : seed_(seed),
        stream_id_(stream_id),
        key_(mix64(seed ^ mix64(stream_id + 0x9e3779b97f4a7c15ULL))) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); safe input for inverse CDFs.
  double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal via inverse CDF.
  double normal() noexcept { return normal_quantile(uniform_open()); }

  /// Uniform integer in [0, n). Lemire rejection keeps it unbiased.
  std::size_t below(std::size_t n) noexcept {
    if (n <= 1) return 0;
    const auto bound = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t x = next_u64();
      const __uint128_t m = static_cast<__uint128_t>(x) * bound;
      if (static_cast<std::uint64_t>(m) >= threshold) {
        return static_cast<std::size_t>(m >> 64);
      }
    }
  }

  template <class T>
  void shuffle(std::span<T> values) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) noexcept {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(idx));
    return idx;
  }

  /// k distinct indices from [0, n), returned in ascending order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) noexcept {
    auto idx = permutation(n);
    idx.resize(k < n ? k : n);
    std::sort(idx.begin(), idx.end());
    return idx;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace cqpc
