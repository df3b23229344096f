#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oobforest {

// SplitMix64 step; used to turn (seed, stream id) pairs into well-separated
// engine seeds so parallel workers never share a stream.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s = a ^ (stream_id * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
  return splitmix64(s);
}

// Deterministic random stream. Wraps std::mt19937_64 (whose output sequence
// is fixed by the standard) and draws bounded integers and unit reals with
// our own reductions, so results do not depend on the standard library's
// distribution implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  /// Substream `stream_id` of master `seed`; distinct ids give independent streams.
  static RngStream derive(std::uint64_t seed, std::uint64_t stream_id) {
    return RngStream(mix_seed(seed, stream_id));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1).
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound). bound must be >= 1.
  std::uint64_t next_below(std::uint64_t bound) {
    // rejection sampling on the top bits; unbiased
    const std::uint64_t limit = bound * ((~std::uint64_t{0}) / bound);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  /// Uniform double in [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  /// Standard normal via Box-Muller (one value per call; spare discarded).
  double next_normal() {
    double u1 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  bool next_bernoulli(double prob) { return next_unit() < prob; }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices drawn from [0, n), in draw order.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      const std::size_t j =
          static_cast<std::size_t>(next_below(static_cast<std::uint64_t>(n - i)));
      out.push_back(pool[j]);
      std::swap(pool[j], pool[static_cast<std::size_t>(n - 1 - i)]);
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace oobforest
