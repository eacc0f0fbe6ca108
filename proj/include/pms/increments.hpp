#pragma once

// Multi-scale segmentation and incremental features.
//
// A window of K poses is cut into five consecutive δ-frame segments per
// scale. First differences of neighbouring segments are velocity
// increments, differences of those are acceleration increments, and each
// family is fused into one δ-frame feature by a convex weighting.
//
// Everything here is generic over the frame type: plain Tensors for data
// processing and ad::Var for the differentiable model path.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pms/numerics/autodiff.hpp"

namespace pms::inc {

inline constexpr std::size_t kSegments = 5;
inline constexpr std::size_t kVelocityDiffs = kSegments - 1;
inline constexpr std::size_t kAccelDiffs = kSegments - 2;

enum class Anchor { end, start };

struct ScaleConfig {
  std::vector<std::size_t> deltas{10, 5, 2};
  Anchor anchor = Anchor::end;

  void validate(std::size_t history) const {
    if (deltas.empty()) throw ConfigError("scales: at least one interval required");
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      if (deltas[i] == 0) throw ConfigError("scales: intervals must be >= 1");
      if (kSegments * deltas[i] > history) {
        throw ConfigError("scales: 5·" + std::to_string(deltas[i]) + " exceeds history of " + std::to_string(history));
      }
      if (i > 0 && deltas[i] >= deltas[i - 1]) throw ConfigError("scales: intervals must be strictly decreasing");
    }
  }
};

/// Convex coefficients for the 4 velocity and 3 acceleration increments.
struct FusionWeights {
  std::vector<double> alpha{0.1, 0.2, 0.3, 0.4};
  std::vector<double> beta{0.2, 0.3, 0.5};

  void validate() const {
    check(alpha, kVelocityDiffs, "alpha");
    check(beta, kAccelDiffs, "beta");
  }

  static void check(const std::vector<double>& w, std::size_t n, const char* what) {
    if (w.size() != n) throw ConfigError(std::string(what) + ": expected " + std::to_string(n) + " coefficients");
    double s = 0.0;
    for (double x : w) {
      if (!(x >= 0.0)) throw ConfigError(std::string(what) + ": coefficients must be non-negative");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError(std::string(what) + ": coefficients must sum to 1");
  }
};

template <class Frame>
using Segment = std::vector<Frame>;

template <class Frame>
struct ScaleIncrements {
  std::size_t delta = 0;
  std::array<Segment<Frame>, kSegments> segments;
  std::array<Segment<Frame>, kVelocityDiffs> velocity;
  std::array<Segment<Frame>, kAccelDiffs> accel;
  Segment<Frame> fused_velocity;
  Segment<Frame> fused_accel;
};

/// Σ coeffs[i]·terms[i]. Specialized for autodiff nodes to emit one node.
template <class Frame>
Frame combine(const std::vector<Frame>& terms, const std::vector<double>& coeffs) {
  Frame out = coeffs[0] * terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) out = out + coeffs[i] * terms[i];
  return out;
}

inline ad::Var combine(const std::vector<ad::Var>& terms, const std::vector<double>& coeffs) {
  return ad::lincomb(terms, coeffs);
}

/// First frame index of the five-segment span at scale δ.
inline std::size_t segment_origin(std::size_t window, std::size_t delta, Anchor anchor) {
  if (delta == 0) throw ConfigError("segment: interval must be >= 1");
  if (window < kSegments * delta) {
    throw DataError("insufficient history: " + std::to_string(window) + " frames for 5 segments of " +
                    std::to_string(delta));
  }
  return anchor == Anchor::end ? window - kSegments * delta : 0;
}

/// Five contiguous δ-frame segments, oldest first.
template <class Frame>
std::array<Segment<Frame>, kSegments> segment(std::span<const Frame> window, std::size_t delta, Anchor anchor) {
  const std::size_t origin = segment_origin(window.size(), delta, anchor);
  std::array<Segment<Frame>, kSegments> out;
  for (std::size_t k = 0; k < kSegments; ++k) {
    const auto first = window.begin() + static_cast<std::ptrdiff_t>(origin + k * delta);
    out[k].assign(first, first + static_cast<std::ptrdiff_t>(delta));
  }
  return out;
}

namespace detail {

template <class Frame, std::size_t N>
std::array<Segment<Frame>, N - 1> adjacent_differences(const std::array<Segment<Frame>, N>& in) {
  const std::size_t delta = in[0].size();
  for (const auto& s : in) {
    if (s.size() != delta) throw DimensionError("increments: segments differ in length");
  }
  std::array<Segment<Frame>, N - 1> out;
  for (std::size_t k = 0; k + 1 < N; ++k) {
    out[k].reserve(delta);
    for (std::size_t t = 0; t < delta; ++t) out[k].push_back(combine(std::vector<Frame>{in[k + 1][t], in[k][t]}, std::vector<double>{1.0, -1.0}));
  }
  return out;
}

template <class Frame, std::size_t N>
Segment<Frame> fuse(const std::array<Segment<Frame>, N>& diffs, const std::vector<double>& weights) {
  const std::size_t delta = diffs[0].size();
  Segment<Frame> out;
  out.reserve(delta);
  std::vector<Frame> terms(N);
  for (std::size_t t = 0; t < delta; ++t) {
    for (std::size_t i = 0; i < N; ++i) terms[i] = diffs[i][t];
    out.push_back(combine(terms, weights));
  }
  return out;
}

}  // namespace detail

/// ΔX_k = S_{k+1} - S_k for k = 1..4.
template <class Frame>
std::array<Segment<Frame>, kVelocityDiffs> velocity_diffs(const std::array<Segment<Frame>, kSegments>& segments) {
  return detail::adjacent_differences(segments);
}

/// ΔΔX_k = ΔX_{k+1} - ΔX_k for k = 1..3.
template <class Frame>
std::array<Segment<Frame>, kAccelDiffs> accel_diffs(const std::array<Segment<Frame>, kVelocityDiffs>& velocity) {
  return detail::adjacent_differences(velocity);
}

template <class Frame>
Segment<Frame> fuse_velocity(const std::array<Segment<Frame>, kVelocityDiffs>& diffs, const FusionWeights& w) {
  FusionWeights::check(w.alpha, kVelocityDiffs, "alpha");
  return detail::fuse(diffs, w.alpha);
}

template <class Frame>
Segment<Frame> fuse_accel(const std::array<Segment<Frame>, kAccelDiffs>& diffs, const FusionWeights& w) {
  FusionWeights::check(w.beta, kAccelDiffs, "beta");
  return detail::fuse(diffs, w.beta);
}

/// Full per-scale pipeline: segments, both difference orders, both fusions.
template <class Frame>
ScaleIncrements<Frame> compute_increments(std::span<const Frame> window, std::size_t delta, Anchor anchor,
                                          const FusionWeights& weights) {
  weights.validate();
  ScaleIncrements<Frame> out;
  out.delta = delta;
  out.segments = segment(window, delta, anchor);
  out.velocity = velocity_diffs(out.segments);
  out.accel = accel_diffs(out.velocity);
  out.fused_velocity = detail::fuse(out.velocity, weights.alpha);
  out.fused_accel = detail::fuse(out.accel, weights.beta);
  return out;
}

}  // namespace pms::inc
