#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "pms/dataio/motion.hpp"
#include "pms/numerics/rng.hpp"

namespace pms::data {

/// Parameters of the sinusoidal motion generator.
struct SynthSpec {
  std::string name = "synth";
  std::size_t joints = 8;
  std::size_t frames = 400;
  double fps = 25.0;
  std::size_t sinusoids = 3;
  double freq_min = 0.1;  // Hz
  double freq_max = 1.0;  // Hz
  double amplitude = 1.0;
  double noise_std = 0.0;
  std::optional<std::size_t> trend_break;
  std::uint64_t seed = 0;

  void validate() const {
    if (joints == 0 || frames == 0) throw ConfigError("synth: joints and frames must be positive");
    if (!(fps > 0.0)) throw ConfigError("synth: fps must be positive");
    if (!(amplitude > 0.0)) throw ConfigError("synth: amplitude bound must be positive");
    if (!(noise_std >= 0.0)) throw ConfigError("synth: noise standard deviation must be non-negative");
    if (!(freq_min >= 0.0 && freq_min <= freq_max && freq_max < fps / 2.0)) {
      throw ConfigError("synth: frequencies must satisfy 0 <= min <= max < fps/2");
    }
    if (!is_token_safe(name)) throw ConfigError("synth: name must be token-safe");
  }
};

/// Per joint and axis: a sum of seeded sinusoids plus Gaussian noise
/// truncated at 6σ. With a trend break, every sinusoid switches to a freshly
/// drawn frequency at the break frame while staying continuous in position.
inline MotionSequence synth_generate(const SynthSpec& spec) {
  spec.validate();
  RngState rng(spec.seed, Stream::synth);
  const std::size_t channels = spec.joints * 3;
  const double two_pi = 2.0 * std::numbers::pi;

  struct Wave {
    double amp, freq, phase, freq_after, phase_after;
  };
  std::vector<Wave> waves(channels * spec.sinusoids);
  for (Wave& w : waves) {
    w.amp = rng.uniform(0.0, spec.amplitude);
    w.freq = rng.uniform(spec.freq_min, spec.freq_max);
    w.phase = rng.uniform(0.0, two_pi);
    w.freq_after = rng.uniform(spec.freq_min, spec.freq_max);
    w.phase_after = w.phase;
    if (spec.trend_break) {
      const double tb = static_cast<double>(*spec.trend_break) / spec.fps;
      w.phase_after = w.phase + two_pi * (w.freq - w.freq_after) * tb;
    }
  }

  std::vector<double> coords(spec.frames * channels, 0.0);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    const double t = static_cast<double>(f) / spec.fps;
    const bool after = spec.trend_break && f >= *spec.trend_break;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      double v = 0.0;
      for (std::size_t s = 0; s < spec.sinusoids; ++s) {
        const Wave& w = waves[ch * spec.sinusoids + s];
        v += after ? w.amp * std::sin(two_pi * w.freq_after * t + w.phase_after)
                   : w.amp * std::sin(two_pi * w.freq * t + w.phase);
      }
      if (spec.noise_std > 0.0) v += spec.noise_std * std::clamp(rng.normal(), -6.0, 6.0);
      coords[f * channels + ch] = v;
    }
  }
  return MotionSequence(spec.name, spec.fps, spec.joints, std::move(coords));
}

}  // namespace pms::data
