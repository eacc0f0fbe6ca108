#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace pms {

/// Use-site identifiers; each draws from its own stream so that, for example,
/// adding a dropout layer does not shift the initialization sequence.
enum class Stream : std::uint64_t {
  init = 1,
  dropout = 2,
  shuffle = 3,
  synth = 4,
  test = 99,
};

/// Seeded random stream positioned by (seed, stream, counter).
///
/// Two states with the same triple produce the same draws. The counter
/// counts raw 64-bit words consumed from the engine.
class RngState {
 public:
  RngState(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0)
      : seed_(seed), stream_(stream), engine_(make_seed(seed, stream)) {
    skip(counter);
  }

  RngState(std::uint64_t seed, Stream stream, std::uint64_t counter = 0)
      : RngState(seed, static_cast<std::uint64_t>(stream), counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return engine_();
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes two words per draw.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  /// Independent child stream, e.g. one per training epoch.
  RngState fork(std::uint64_t sub) const { return RngState(seed_ ^ (sub * 0x9E3779B97F4A7C15ULL), stream_); }

 private:
  static std::mt19937_64 make_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
  }

  void skip(std::uint64_t n) {
    engine_.discard(n);
    counter_ = n;
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace pms
