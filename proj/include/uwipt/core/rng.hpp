#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace uwipt {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

/// Counter-based generator: the n-th output is a pure function of (key, n).
/// Streams are derived with split(); there is no shared global state.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : key_(mix64(seed ^ 0x5851f42d4c957f2dULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix64(key_ ^ mix64(counter_++ * 0xd1342543de82ef95ULL)); }

  /// Independent child stream keyed by `tag`; does not advance this stream.
  Rng split(std::uint64_t tag) const {
    Rng child;
    child.key_ = mix64(key_ ^ mix64(tag + 0x632be59bd9b4e019ULL));
    return child;
  }
  Rng split(std::string_view tag) const { return split(hash_string(tag)); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : (*this)() % n; }

  /// Standard normal via Box-Muller; one draw consumes two counters.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Normal truncated to +-2 standard deviations by rejection.
  double truncated_normal(double stddev) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * stddev;
    }
  }

  /// Poisson count by summing exponential inter-arrival times.
  std::uint64_t poisson(double mean) {
    std::uint64_t k = 0;
    double t = 0.0;
    for (;;) {
      double u = uniform();
      if (u < 1e-300) u = 1e-300;
      t -= std::log(u);
      if (t > mean) return k;
      ++k;
    }
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates shuffle driven by an Rng.
template <typename Range>
void shuffle(Range& range, Rng& rng) {
  using std::swap;
  for (std::size_t i = range.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    swap(range[i - 1], range[j]);
  }
}

}  // namespace uwipt
